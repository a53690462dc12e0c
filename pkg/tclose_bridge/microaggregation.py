"""Fixed-size MDAV microaggregation over standardized quasi-identifiers."""

from __future__ import annotations

from collections import defaultdict

import numpy as np
from loguru import logger

from .dataset import qi_matrix
from .exceptions import KTooLarge
from .models import AttributeKind, Microdata, Partition, PartitionClass


def _farthest(features: np.ndarray, candidates: np.ndarray, point: np.ndarray) -> int:
    distance = np.linalg.norm(features[candidates] - point, axis=1)
    return int(candidates[int(np.argmax(distance))])


def _nearest(features: np.ndarray, candidates: np.ndarray, point: np.ndarray, k: int) -> np.ndarray:
    distance = np.linalg.norm(features[candidates] - point, axis=1)
    return candidates[np.lexsort((candidates, distance))[:k]]


def _mdav(features: np.ndarray, indices: list[int], k: int) -> list[list[int]]:
    remaining = np.asarray(sorted(indices), dtype=np.int64)
    groups: list[list[int]] = []

    def take(seed: int) -> None:
        nonlocal remaining
        group = _nearest(features, remaining, features[seed], k)
        groups.append(sorted(int(i) for i in group))
        remaining = np.setdiff1d(remaining, group, assume_unique=True)

    while remaining.size >= 3 * k:
        centroid = features[remaining].mean(axis=0)
        r = _farthest(features, remaining, centroid)
        s = _farthest(features, remaining, features[r])
        take(r)
        take(s)
    if remaining.size >= 2 * k:
        centroid = features[remaining].mean(axis=0)
        take(_farthest(features, remaining, centroid))
    if remaining.size:
        groups.append([int(i) for i in remaining])
    return groups


def kanon_microaggregate(data: Microdata, k: int) -> Partition:
    """Group records into classes of at least k by the MDAV heuristic.

    Records are first blocked on their categorical quasi-identifiers. Blocks
    of at least k records are aggregated on their own; the smaller ones are
    pooled and aggregated together. A pool smaller than k joins the nearest
    existing class record by record, so such classes can exceed 2k − 1.

    Args:
        data: Table whose QI columns drive the grouping
        k: Minimum class size

    Returns:
        Partition: Classes numbered from 1 in order of their first record

    Raises:
        KTooLarge: If k is below 1 or above N
    """
    if k < 1 or k > data.N:
        raise KTooLarge(f"k={k} must lie in [1, N={data.N}]")

    features = qi_matrix(data)
    categorical = [data.index(attr.name) for attr in data.quasi_identifiers if attr.kind is AttributeKind.CATEGORICAL]
    blocks: dict[tuple, list[int]] = defaultdict(list)
    for i, row in enumerate(data.records):
        blocks[tuple(row[j] for j in categorical)].append(i)

    groups: list[list[int]] = []
    pool: list[int] = []
    for key in sorted(blocks):
        if len(blocks[key]) >= k:
            groups.extend(_mdav(features, blocks[key], k))
        else:
            pool.extend(blocks[key])

    if len(pool) >= k:
        groups.extend(_mdav(features, pool, k))
    elif pool:
        logger.debug(f"{len(pool)} records from small categorical blocks join their nearest class")
        centroids = np.stack([features[group].mean(axis=0) for group in groups])
        for i in sorted(pool):
            target = int(np.argmin(np.linalg.norm(centroids - features[i], axis=1)))
            groups[target].append(i)

    groups.sort(key=min)
    classes = tuple(
        PartitionClass(class_id=cid, record_indices=tuple(sorted(group))) for cid, group in enumerate(groups, start=1)
    )
    logger.info(f"Microaggregated {data.N} records into {len(classes)} classes with k={k}")
    return Partition(classes=classes)
