"""Dataset ingestion, serialization and equivalence-class extraction."""

from __future__ import annotations

import csv
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from loguru import logger

from .exceptions import CellViolation, EmptyDataset, SchemaMismatch
from .models import AttributeKind, AttributeSchema, Cell, EquivalenceClass, Microdata


def load_dataset(path: str | Path, schema: Sequence[AttributeSchema]) -> Microdata:
    """Load a CSV file (mandatory header, RFC 4180 quoting) against a schema.

    Args:
        path: Location of the CSV file
        schema: Column declarations, in header order

    Returns:
        Microdata: The validated table, rows in file order

    Raises:
        SchemaMismatch: If the header differs from the schema names
        CellViolation: If a cell does not fit its column
        EmptyDataset: If the file has no data rows
    """
    path = Path(path)
    schema = tuple(schema)
    logger.info(f"Loading dataset {path} with {len(schema)} declared columns")

    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8",
            quoting=csv.QUOTE_MINIMAL,
        )
    except pd.errors.EmptyDataError:
        raise SchemaMismatch(f"{path} has no header row") from None
    except pd.errors.ParserError as e:
        raise SchemaMismatch(f"{path}: {e}") from e

    header = [str(name) for name in frame.columns]
    expected = [attr.name for attr in schema]
    if header != expected:
        raise SchemaMismatch(f"header {header} does not match schema columns {expected}")
    if len(frame) == 0:
        raise EmptyDataset(f"{path} has a header but no data rows")

    records = []
    for r, row in enumerate(frame.itertuples(index=False, name=None)):
        records.append(tuple(_parse_cell(attr, value, r) for attr, value in zip(schema, row)))

    data = Microdata(schema=schema, records=tuple(records))
    logger.debug(f"Loaded {data.N} records from {path}")
    return data


def _parse_cell(attr: AttributeSchema, raw: object, row: int) -> Cell:
    if not isinstance(raw, str) or raw == "":
        raise CellViolation(row, attr.name, raw, "is missing")
    if attr.kind is AttributeKind.NUMERIC:
        try:
            return float(raw)
        except ValueError:
            raise CellViolation(row, attr.name, raw, "is not numeric") from None
    return raw


def save_dataset(data: Microdata, path: str | Path) -> Path:
    """Write a table as CSV so that load_dataset reproduces it cell for cell."""
    frame = pd.DataFrame({name: list(data.column(name)) for name in data.names}, columns=list(data.names))
    text = frame.to_csv(index=False, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    return atomic_write_text(Path(path), text)


def atomic_write_text(path: Path, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename it into place."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"Wrote {path}")
    return path


def equivalence_classes(data: Microdata, qi_columns: Sequence[str] | None = None) -> tuple[EquivalenceClass, ...]:
    """Group records by exact equality of their quasi-identifier tuple.

    Class ids start at 1 and follow the sorted order of the signatures.
    """
    if qi_columns is None:
        qi_columns = [attr.name for attr in data.quasi_identifiers]
    attrs = [data.attribute(name) for name in qi_columns]
    positions = [data.index(name) for name in qi_columns]

    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, row in enumerate(data.records):
        groups[tuple(row[j] for j in positions)].append(i)

    def signature_key(signature: tuple) -> tuple:
        return tuple(attr.sort_key(value) for attr, value in zip(attrs, signature))

    ordered = sorted(groups, key=signature_key)
    return tuple(
        EquivalenceClass(class_id=cid, record_indices=tuple(groups[signature]), qi_signature=signature)
        for cid, signature in enumerate(ordered, start=1)
    )


def qi_matrix(data: Microdata, qi_columns: Sequence[str] | None = None) -> np.ndarray:
    """Standardized numeric view of the quasi-identifiers, one row per record.

    Numeric columns enter as values, ordinal columns by rank and categorical
    columns one-hot; every feature is then z-scored.
    """
    if qi_columns is None:
        qi_columns = [attr.name for attr in data.quasi_identifiers]

    features: list[np.ndarray] = []
    for name in qi_columns:
        attr = data.attribute(name)
        values = data.column(name)
        if attr.kind is AttributeKind.NUMERIC:
            features.append(np.asarray(values, dtype=np.float64))
        elif attr.kind is AttributeKind.ORDINAL:
            features.append(np.asarray([attr.rank(v) for v in values], dtype=np.float64))
        else:
            for category in sorted(set(values)):
                features.append(np.asarray([v == category for v in values], dtype=np.float64))

    if not features:
        return np.zeros((data.N, 0))
    matrix = np.column_stack(features)
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    std[std == 0] = 1.0
    return (matrix - mean) / std
