"""tclose_bridge.models
----------------------

数据模型层：定义微数据（Microdata）、属性模式（AttributeSchema）、等价类、
离散分布与扩展距离，以及构造/验证过程产生的报告与证书。

外部输入（模式边车文件、合成数据规格、CLI 参数、机制参数）使用 Pydantic 做校验；
内部的轻量对象（数据表、分布、划分、报告）使用 frozen dataclass，保证加载后不可变，
可以被任意数量的工作线程并发读取。

主要导出：
- AttributeRole, AttributeKind: 属性角色与类型枚举
- AttributeSchema: Pydantic 模型，单列的角色/类型/取值约束
- Microdata, EquivalenceClass: 数据表与等价类
- DiscreteDistribution, ExtendedDistance, DensityGrid: 距离计算的输入与结果
- ClosenessReport, StochasticMechanismSpec: t-closeness 检查
- Bucketization, Partition, AnonymizedDataset: 构造模块的产物
- LaplaceMechanism, BoundCertificate: 差分隐私桥接
- SyntheticSpec, VerificationReport: 验证工具
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum
from functools import total_ordering
from typing import Any, Literal, Self, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import CellViolation, EmptyDataset, SchemaMismatch

Cell = float | str

MASS_TOLERANCE = 1e-12
# Relative slack when comparing a computed ratio against a threshold it may equal exactly.
RATIO_SLACK = 1e-12


class AttributeRole(StrEnum):
    QUASI_IDENTIFIER = "quasi_identifier"
    CONFIDENTIAL = "confidential"


class AttributeKind(StrEnum):
    NUMERIC = "numeric"
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"


class AttributeSchema(BaseModel):
    """One column of a microdata table.

    ``bounds`` is only meaningful for numeric columns and is required for any
    column that goes through the Laplace pipeline, since the sensitivity is the
    width of the interval. ``order`` lists every admissible value of an ordinal
    column exactly once.
    """

    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    role: AttributeRole
    kind: AttributeKind
    bounds: tuple[float, float] | None = None
    order: tuple[str, ...] | None = None

    @model_validator(mode="after")
    def validate_kind_extras(self) -> Self:
        if self.bounds is not None:
            if self.kind is not AttributeKind.NUMERIC:
                raise ValueError(f"bounds given for non-numeric column '{self.name}'")
            lo, hi = self.bounds
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"invalid bounds {self.bounds} for column '{self.name}'")
        if self.kind is AttributeKind.ORDINAL:
            if not self.order:
                raise ValueError(f"ordinal column '{self.name}' must list its order")
            if len(set(self.order)) != len(self.order):
                raise ValueError(f"ordinal column '{self.name}' repeats a value in its order")
        elif self.order is not None:
            raise ValueError(f"order given for non-ordinal column '{self.name}'")
        return self

    @property
    def is_quasi_identifier(self) -> bool:
        return self.role is AttributeRole.QUASI_IDENTIFIER

    @property
    def is_confidential(self) -> bool:
        return self.role is AttributeRole.CONFIDENTIAL

    @property
    def width(self) -> float | None:
        if self.bounds is None:
            return None
        return self.bounds[1] - self.bounds[0]

    def rank(self, value: str) -> int:
        """Position of an ordinal value in ``order``."""
        return self.order.index(value)

    def sort_key(self, value: Cell) -> tuple:
        if self.kind is AttributeKind.NUMERIC:
            return (0, float(value), "")
        if self.kind is AttributeKind.ORDINAL and value in self.order:
            return (0, float(self.rank(value)), "")
        return (1, 0.0, str(value))

    def check_cell(self, value: Cell) -> str | None:
        """Return why ``value`` does not fit this column, or None if it does."""
        if self.kind is AttributeKind.NUMERIC:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return "is not numeric"
            if not math.isfinite(value):
                return "is not a finite number"
            if self.bounds is not None and not (self.bounds[0] <= value <= self.bounds[1]):
                return f"is outside bounds [{self.bounds[0]}, {self.bounds[1]}]"
            return None
        if not isinstance(value, str) or value == "":
            return "is missing"
        if self.kind is AttributeKind.ORDINAL and value not in self.order:
            return "is not in the declared order"
        return None


@dataclass(frozen=True)
class Microdata:
    """A validated, immutable table. Row order is the file order."""

    schema: tuple[AttributeSchema, ...]
    records: tuple[tuple[Cell, ...], ...]

    def __post_init__(self):
        names = [attr.name for attr in self.schema]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicated column name in {names}")
        if not self.records:
            raise EmptyDataset("dataset has no records")
        for r, row in enumerate(self.records):
            if len(row) != len(self.schema):
                raise SchemaMismatch(f"record {r} has {len(row)} cells, schema has {len(self.schema)} columns")
            for attr, value in zip(self.schema, row):
                reason = attr.check_cell(value)
                if reason is not None:
                    raise CellViolation(r, attr.name, value, reason)

    @property
    def N(self) -> int:
        return len(self.records)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(attr.name for attr in self.schema)

    @property
    def quasi_identifiers(self) -> tuple[AttributeSchema, ...]:
        return tuple(attr for attr in self.schema if attr.is_quasi_identifier)

    @property
    def confidential(self) -> tuple[AttributeSchema, ...]:
        return tuple(attr for attr in self.schema if attr.is_confidential)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaMismatch(f"unknown column '{name}'") from None

    def attribute(self, name: str) -> AttributeSchema:
        return self.schema[self.index(name)]

    def column(self, name: str) -> tuple[Cell, ...]:
        j = self.index(name)
        return tuple(row[j] for row in self.records)

    def replace_columns(
        self,
        replacements: dict[str, tuple[AttributeSchema, Sequence[Cell]]],
        appended: Sequence[tuple[AttributeSchema, Sequence[Cell]]] = (),
    ) -> Microdata:
        """Return a new table with some columns swapped and others appended."""
        schema = list(self.schema)
        columns = [list(self.column(name)) for name in self.names]
        for name, (attr, values) in replacements.items():
            j = self.index(name)
            schema[j] = attr
            columns[j] = list(values)
        for attr, values in appended:
            schema.append(attr)
            columns.append(list(values))
        records = tuple(zip(*columns))
        return Microdata(schema=tuple(schema), records=records)


@dataclass(frozen=True)
class EquivalenceClass:
    class_id: int
    record_indices: tuple[int, ...]
    qi_signature: tuple[Cell, ...]

    @property
    def size(self) -> int:
        return len(self.record_indices)


@dataclass(frozen=True)
class DiscreteDistribution:
    alphabet: tuple
    mass: tuple[float, ...]

    def __post_init__(self):
        if len(self.alphabet) != len(self.mass):
            raise ValueError("alphabet and mass differ in length")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet labels must be distinct")
        if any(m < 0 for m in self.mass):
            raise ValueError("probability masses must be nonnegative")
        if abs(math.fsum(self.mass) - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"masses sum to {math.fsum(self.mass)}, not 1")

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.mass, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.alphabet)


@total_ordering
@dataclass(frozen=True)
class ExtendedDistance:
    """A ratio distance: a real ≥ 1 or INFINITE (``value is None``)."""

    value: float | None

    def __post_init__(self):
        if self.value is not None and not (math.isfinite(self.value) and self.value >= 1.0):
            raise ValueError(f"finite distance must be a real ≥ 1, got {self.value}")

    @classmethod
    def finite(cls, value: float) -> ExtendedDistance:
        return cls(float(value))

    @property
    def is_finite(self) -> bool:
        return self.value is not None

    def __float__(self) -> float:
        return math.inf if self.value is None else self.value

    def __lt__(self, other: ExtendedDistance) -> bool:
        return float(self) < float(other)

    def within(self, t: float, rel_tol: float = 0.0) -> bool:
        return self.value is not None and self.value <= t * (1.0 + rel_tol)

    def to_json(self) -> float | str:
        return "inf" if self.value is None else self.value

    def __str__(self) -> str:
        return "inf" if self.value is None else repr(self.value)


INFINITE = ExtendedDistance(None)
IDENTICAL = ExtendedDistance(1.0)


@dataclass(frozen=True)
class DensityGrid:
    """Density values of one distribution on a strictly increasing grid."""

    points: np.ndarray
    values: np.ndarray
    label: str = ""
    # natural log of values when known exactly; keeps far-tail ratios finite after exp underflows
    log_values: np.ndarray | None = None

    def __post_init__(self):
        if self.points.ndim != 1 or self.points.shape != self.values.shape:
            raise ValueError("points and values must be 1-d arrays of equal length")
        if self.points.size < 2 or np.any(np.diff(self.points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("densities must be finite and nonnegative")

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.points))


@dataclass(frozen=True)
class ClosenessReport:
    target_t: float
    per_class: tuple[tuple[int, ExtendedDistance], ...]
    columns: tuple[str, ...] = ()
    mode: str = "joint"

    @property
    def achieved_t(self) -> ExtendedDistance:
        if not self.per_class:
            return IDENTICAL
        return max(distance for _, distance in self.per_class)

    @property
    def satisfied(self) -> bool:
        return self.achieved_t.within(self.target_t, RATIO_SLACK)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "columns": list(self.columns),
            "target_t": self.target_t,
            "achieved_t": self.achieved_t.to_json(),
            "satisfied": self.satisfied,
            "per_class": [{"class_id": cid, "distance": d.to_json()} for cid, d in self.per_class],
        }


class StochasticMechanismSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Literal["laplace"] = "laplace"
    scale: float = Field(gt=0)
    column: str


@dataclass(frozen=True)
class Bucketization:
    """Confidential values grouped into ``b`` buckets of record indices."""

    buckets: tuple[tuple[int, ...], ...]
    value_order: tuple[int, ...]
    column: str
    ranges: tuple[str, ...] = ()

    @property
    def b(self) -> int:
        return len(self.buckets)

    @property
    def N(self) -> int:
        return sum(len(bucket) for bucket in self.buckets)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(bucket) for bucket in self.buckets)

    @property
    def bucket_mass(self) -> tuple[float, ...]:
        return tuple(size / self.N for size in self.sizes)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"B{j + 1}" for j in range(self.b))

    def bucket_of(self) -> dict[int, int]:
        return {i: j for j, bucket in enumerate(self.buckets) for i in bucket}


@dataclass(frozen=True)
class PartitionClass:
    class_id: int
    record_indices: tuple[int, ...]
    emphasized_bucket: int | None = None

    @property
    def size(self) -> int:
        return len(self.record_indices)


@dataclass(frozen=True)
class Partition:
    classes: tuple[PartitionClass, ...]
    l: int | None = None
    t: int | None = None
    counts: tuple[tuple[int, ...], ...] = ()

    @property
    def e_sizes(self) -> tuple[int, ...]:
        return tuple(cls.size for cls in self.classes)

    @property
    def k(self) -> int:
        return min(self.e_sizes)

    def as_equivalence_classes(self, data: Microdata) -> tuple[EquivalenceClass, ...]:
        qi = [data.index(attr.name) for attr in data.quasi_identifiers]
        return tuple(
            EquivalenceClass(
                class_id=cls.class_id,
                record_indices=tuple(sorted(cls.record_indices)),
                qi_signature=tuple(data.records[min(cls.record_indices)][j] for j in qi),
            )
            for cls in self.classes
        )


class LaplaceMechanism(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0)
    sensitivity: float = Field(gt=0)
    seed: int = Field(default=0, ge=0)

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


class BoundCertificate(BaseModel):
    direction: Literal["dp_to_t", "t_to_dp"]
    epsilon: float = Field(ge=0)
    t: float
    N: int | None = None
    class_sizes: list[int] | None = None
    formula_note: str
    upper_terms: list[float] | None = None
    lower_terms: list[float] | None = None
    binding_class_size: int | None = None
    column_epsilons: dict[str, float] | None = None

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)


@dataclass(frozen=True)
class AnonymizedDataset:
    data: Microdata
    provenance: tuple[tuple[int, int | None], ...]
    partition: Partition
    certificate: ClosenessReport | None = None
    bound: BoundCertificate | None = None
    bucketization: Bucketization | None = None

    def sidecar(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "N": self.data.N,
            "k": self.partition.k,
            "class_sizes": list(self.partition.e_sizes),
            "provenance": [
                {"row": i, "class_id": cid, "bucket": bucket} for i, (cid, bucket) in enumerate(self.provenance)
            ],
        }
        if self.partition.l is not None:
            payload["l"] = self.partition.l
        if self.bucketization is not None:
            payload["buckets"] = [
                {"label": label, "size": size, "range": value_range}
                for label, size, value_range in zip(
                    self.bucketization.labels, self.bucketization.sizes, self.bucketization.ranges
                )
            ]
        if self.certificate is not None:
            payload["certificate"] = self.certificate.to_dict()
        if self.bound is not None:
            payload["bound"] = self.bound.to_dict()
        return payload


class SyntheticSpec(BaseModel):
    """Recipe for a synthetic table with one ordinal QI and one numeric confidential column."""

    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=1)
    group_sizes: tuple[int, ...]
    conf_distribution: Literal["uniform", "skewed", "bimodal"] = "uniform"
    skew_a: float = Field(default=2.0, gt=0)
    skew_b: float = Field(default=5.0, gt=0)
    bimodal_concentration: float = Field(default=30.0, gt=2)
    value_range: tuple[float, float] = (0.0, 100.0)
    seed: int = Field(default=0, ge=0)

    def problems(self) -> list[str]:
        found = []
        if not self.group_sizes or any(size < 1 for size in self.group_sizes):
            found.append("group sizes must be positive")
        if sum(self.group_sizes) != self.N:
            found.append(f"group sizes sum to {sum(self.group_sizes)}, not N={self.N}")
        lo, hi = self.value_range
        if not lo < hi:
            found.append(f"value range {self.value_range} is empty")
        return found


class VerificationReport(BaseModel):
    claim: str
    trials: int
    worst_observed: float
    bound: float
    tolerance: float = 0.0
    passed: bool
    runtime: float | None = None
    details: dict[str, Any] = Field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.bound - self.worst_observed

    @classmethod
    def judge(cls, claim: str, trials: int, worst: float, bound: float, tolerance: float, **kwargs) -> Self:
        return cls(
            claim=claim,
            trials=trials,
            worst_observed=worst,
            bound=bound,
            tolerance=tolerance,
            passed=bool(worst <= bound * (1.0 + tolerance)),
            **kwargs,
        )

    def to_dict(self, with_timing: bool = False) -> dict[str, Any]:
        payload = self.model_dump(exclude={"runtime"})
        payload["margin"] = self.margin
        if with_timing:
            payload["runtime"] = self.runtime
        return jsonable(payload)


def jsonable(value: Any) -> Any:
    """Recursively replace non-finite floats and ExtendedDistance by JSON-safe values."""
    if isinstance(value, ExtendedDistance):
        return value.to_json()
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, dict):
        return {key: jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.generic):
        return jsonable(value.item())
    return value


__all__ = [
    "AnonymizedDataset",
    "AttributeKind",
    "AttributeRole",
    "AttributeSchema",
    "BoundCertificate",
    "Bucketization",
    "Cell",
    "ClosenessReport",
    "DensityGrid",
    "DiscreteDistribution",
    "EquivalenceClass",
    "ExtendedDistance",
    "IDENTICAL",
    "INFINITE",
    "LaplaceMechanism",
    "Microdata",
    "Partition",
    "PartitionClass",
    "StochasticMechanismSpec",
    "SyntheticSpec",
    "VerificationReport",
    "jsonable",
]
