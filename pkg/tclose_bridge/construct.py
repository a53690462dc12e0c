"""tclose_bridge.construct
------------------------

桶化构造：把机密属性按值序切成 t+1 个尽量等大的桶，再把记录划分成
(t+1)·l 个等价类，每个等价类“强调”一个桶（该桶占比约 t/(t+1)，其余桶各约
1/(t(t+1))），最后按等价类重编码准标识符，得到 k-匿名且 t-close 的发布数据。

Bucket k of the release is labelled ``B<k>`` and the bucket's value range is
written to an extra ``<column>_range`` column. All rounding of the
``[x + 0.5]`` kind is done on exact fractions, so cut positions never depend
on floating point.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from .closeness import check_t_closeness
from .dataset import equivalence_classes, qi_matrix
from .exceptions import BadL, Infeasible, NonIntegerT, TooSmall, UnknownStrategy
from .models import (
    AnonymizedDataset,
    AttributeKind,
    AttributeRole,
    AttributeSchema,
    Bucketization,
    Cell,
    Microdata,
    Partition,
    PartitionClass,
)

DEFAULT_STRATEGY = "greedy-seed"


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def _integer_t(t: int | float) -> int:
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not float(t).is_integer() or t < 1:
        raise NonIntegerT(f"the construction needs an integer t ≥ 1, got {t!r}")
    return int(t)


def optimal_bucket_mass(t: float) -> float:
    """Bucket mass p solving t·p + (1 − p)/t = 1, i.e. 1/(t + 1)."""
    if not t >= 1:
        raise NonIntegerT(f"t must be at least 1, got {t}")
    return 1.0 / (t + 1.0)


def _cumulative_cuts(total: int, parts: int) -> list[int]:
    return [_round_half_up(Fraction(i * total, parts)) for i in range(parts + 1)]


def _range_label(attr: AttributeSchema, values: Sequence[Cell]) -> str:
    if attr.kind is AttributeKind.CATEGORICAL:
        return "{" + "|".join(sorted(set(map(str, values)))) + "}"
    ordered = sorted(values, key=attr.sort_key)
    return f"[{ordered[0]}, {ordered[-1]}]"


def _label_buckets(values: Sequence[Cell], b: int) -> tuple[tuple[int, ...], ...]:
    counts = Counter(values)
    if len(counts) < b:
        raise TooSmall(f"{len(counts)} distinct labels cannot fill {b} buckets")
    totals = [0] * b
    assigned: dict[Cell, int] = {}
    for label in sorted(counts, key=lambda v: (-counts[v], str(v))):
        j = min(range(b), key=lambda k: (totals[k], k))
        assigned[label] = j
        totals[j] += counts[label]
    return tuple(tuple(i for i, v in enumerate(values) if assigned[v] == j) for j in range(b))


def optimal_buckets(data: Microdata, conf_column: str, t: int) -> Bucketization:
    """Split the records into t+1 buckets of (almost) N/(t+1) consecutive values.

    Bucket i ends after sorted position [i·N/(t+1) + 0.5]. Categorical columns
    have no value order: whole labels are dealt out instead, most frequent
    first, each to the bucket with the fewest records so far. Bucket sizes may
    then differ; the quota plan works with the actual masses.

    Raises:
        NonIntegerT: If t is not an integer ≥ 1
        TooSmall: If N < (t+1)², which rules out k ≥ t+1, or a categorical
            column has fewer than t+1 distinct labels
    """
    t = _integer_t(t)
    b = t + 1
    if data.N < b * b:
        raise TooSmall(f"N={data.N} records cannot hold {b} buckets with k ≥ {b}; need N ≥ {b * b}")

    attr = data.attribute(conf_column)
    values = data.column(conf_column)
    if attr.kind is AttributeKind.CATEGORICAL:
        buckets = _label_buckets(values, b)
        order = tuple(i for bucket in buckets for i in bucket)
    else:
        order = sorted(range(data.N), key=lambda i: (attr.sort_key(values[i]), i))
        cuts = _cumulative_cuts(data.N, b)
        buckets = tuple(tuple(order[cuts[j]:cuts[j + 1]]) for j in range(b))
    ranges = tuple(_range_label(attr, [values[i] for i in bucket]) for bucket in buckets)
    logger.info(f"Bucketized '{conf_column}' into {b} buckets of sizes {[len(x) for x in buckets]}")
    return Bucketization(buckets=buckets, value_order=tuple(order), column=conf_column, ranges=ranges)


def class_sizes(N: int, t: int, l: int) -> tuple[int, ...]:
    """Sizes e_i = [i·N/((t+1)l) + 0.5] − [(i−1)·N/((t+1)l) + 0.5] of the (t+1)·l classes."""
    t = _integer_t(t)
    top = N // ((t + 1) ** 2)
    if isinstance(l, bool) or not isinstance(l, int) or not 1 <= l <= top:
        raise BadL(f"l must be an integer in [1, {top}] for N={N}, t={t}; got {l!r}")
    cuts = _cumulative_cuts(N, (t + 1) * l)
    return tuple(cuts[i + 1] - cuts[i] for i in range((t + 1) * l))


def quota_bounds(e: int, bucket_size: int, N: int, t: int) -> tuple[int, int]:
    """Smallest and largest record count of one bucket inside a class of size e."""
    p = Fraction(bucket_size, N)
    return math.ceil(e * p / t), math.floor(e * p * t)


def quota_plan(e_sizes: Sequence[int], bucket_sizes: Sequence[int], t: int) -> tuple[tuple[int, ...], ...]:
    """Integer class × bucket count matrix meeting the quota rules.

    Class i takes ⌈e_i·p_j/t⌉ records from every bucket j it does not emphasize
    and fills the rest from its emphasized bucket ((i mod b)). Rounding can make
    the planned bucket totals differ from the real bucket sizes; single records
    are then moved between two buckets of one class as long as every cell stays
    within its quota bounds.
    """
    N = sum(bucket_sizes)
    b = len(bucket_sizes)
    bounds = [[quota_bounds(e, size, N, t) for size in bucket_sizes] for e in e_sizes]

    plan: list[list[int]] = []
    for i, e in enumerate(e_sizes):
        emphasized = i % b
        row = [bounds[i][j][0] for j in range(b)]
        row[emphasized] = e - sum(row[j] for j in range(b) if j != emphasized)
        lower, upper = bounds[i][emphasized]
        if row[emphasized] < lower:
            raise Infeasible(i + 1, emphasized + 1, f"minimum quotas exceed the class size {e}")
        # spill anything above the emphasized ceiling into buckets with room
        for j in range(b):
            while row[emphasized] > upper and j != emphasized and row[j] < bounds[i][j][1]:
                row[emphasized] -= 1
                row[j] += 1
        if row[emphasized] > upper:
            raise Infeasible(i + 1, emphasized + 1, "emphasized bucket exceeds ⌊e·p·t⌋")
        plan.append(row)

    def surplus() -> list[int]:
        return [sum(plan[i][j] for i in range(len(plan))) - bucket_sizes[j] for j in range(b)]

    balance = surplus()
    while any(balance):
        moved = False
        for src in (j for j in range(b) if balance[j] > 0):
            for dst in (j for j in range(b) if balance[j] < 0):
                for i in range(len(plan)):
                    if plan[i][src] > bounds[i][src][0] and plan[i][dst] < bounds[i][dst][1]:
                        plan[i][src] -= 1
                        plan[i][dst] += 1
                        moved = True
                        break
                if moved:
                    break
            if moved:
                break
        if not moved:
            src = next(j for j in range(b) if balance[j] > 0)
            raise Infeasible(0, src + 1, f"bucket {src + 1} is oversubscribed by {balance[src]} records")
        balance = surplus()

    return tuple(tuple(row) for row in plan)


def verify_quotas(partition: Partition, buckets: Bucketization, t: int) -> list[tuple[int, int, int, int, int]]:
    """Re-check every class against the quota rules, independently of how it was built.

    Returns:
        list: (class_id, bucket, count, lower, upper) for every violated cell; empty when sound
    """
    t = _integer_t(t)
    bucket_of = buckets.bucket_of()
    violations = []
    for cls in partition.classes:
        counts = Counter(bucket_of[i] for i in cls.record_indices)
        for j, size in enumerate(buckets.sizes):
            lower, upper = quota_bounds(cls.size, size, buckets.N, t)
            count = counts.get(j, 0)
            if not lower <= count <= upper:
                violations.append((cls.class_id, j + 1, count, lower, upper))
    return violations


# ---- record selection inside the quotas --------------------------------------

def _qi_order(features: np.ndarray) -> list[int]:
    n = features.shape[0]
    if features.shape[1] == 0:
        return list(range(n))
    keys = [np.arange(n)] + [features[:, c] for c in reversed(range(features.shape[1]))]
    return [int(i) for i in np.lexsort(keys)]


def _fill_greedy_seed(
    plan: Sequence[Sequence[int]], buckets: Bucketization, features: np.ndarray
) -> list[list[int]]:
    """Each class claims the first free record in QI order as its seed, then takes
    the records nearest to the seed from every bucket."""
    order = _qi_order(features)
    position = {i: r for r, i in enumerate(order)}
    free = [sorted(bucket, key=position.__getitem__) for bucket in buckets.buckets]
    members: list[list[int]] = []
    for i, row in enumerate(plan):
        emphasized = i % buckets.b
        if row[emphasized] > 0 and free[emphasized]:
            seed = free[emphasized][0]
        else:
            seed = min((free[j][0] for j in range(buckets.b) if row[j] > 0 and free[j]), key=position.__getitem__)
        chosen: list[int] = []
        for j, need in enumerate(row):
            if need == 0:
                continue
            candidates = np.asarray(free[j])
            distance = np.linalg.norm(features[candidates] - features[seed], axis=1)
            ranks = np.asarray([position[c] for c in free[j]])
            picked = [int(candidates[p]) for p in np.lexsort((ranks, distance))[:need]]
            taken = set(picked)
            free[j] = [c for c in free[j] if c not in taken]
            chosen.extend(picked)
        members.append(chosen)
    return members


def _fill_sorted_scan(
    plan: Sequence[Sequence[int]], buckets: Bucketization, features: np.ndarray
) -> list[list[int]]:
    """Classes take their quota from each bucket in QI sort order."""
    order = _qi_order(features)
    position = {i: r for r, i in enumerate(order)}
    queues = [sorted(bucket, key=position.__getitem__) for bucket in buckets.buckets]
    members = []
    for row in plan:
        chosen = []
        for j, need in enumerate(row):
            chosen.extend(queues[j][:need])
            queues[j] = queues[j][need:]
        members.append(chosen)
    return members


STRATEGIES: dict[str, Callable[..., list[list[int]]]] = {
    "greedy-seed": _fill_greedy_seed,
    "sorted-scan": _fill_sorted_scan,
}


def build_partition(
    data: Microdata,
    buckets: Bucketization,
    t: int,
    l: int,
    qi_strategy: str = DEFAULT_STRATEGY,
) -> Partition:
    """Partition the records into (t+1)·l classes that meet the per-bucket quotas.

    Class i (1-based) emphasizes bucket ((i−1) mod (t+1)) + 1. The result is
    checked for t-closeness on bucket labels before it is returned.

    Raises:
        Infeasible: If the quotas cannot be met after rounding
        UnknownStrategy: If qi_strategy is not a known record-selection strategy
    """
    t = _integer_t(t)
    fill = STRATEGIES.get(qi_strategy)
    if fill is None:
        raise UnknownStrategy(f"unknown QI strategy '{qi_strategy}', expected one of {sorted(STRATEGIES)}")
    if buckets.b != t + 1:
        raise Infeasible(0, buckets.b, f"bucketization has {buckets.b} buckets, t={t} needs {t + 1}")

    e_sizes = class_sizes(data.N, t, l)
    for j, size in enumerate(buckets.sizes):
        if size < len(e_sizes):
            raise Infeasible(0, j + 1, f"bucket holds {size} records but {len(e_sizes)} classes need one each")

    plan = quota_plan(e_sizes, buckets.sizes, t)
    members = fill(plan, buckets, qi_matrix(data))
    classes = tuple(
        PartitionClass(class_id=i + 1, record_indices=tuple(sorted(chosen)), emphasized_bucket=i % buckets.b)
        for i, chosen in enumerate(members)
    )
    partition = Partition(classes=classes, l=l, t=t, counts=plan)

    violations = verify_quotas(partition, buckets, t)
    if violations:
        class_id, bucket, count, lower, upper = violations[0]
        raise Infeasible(class_id, bucket, f"holds {count} records, quota is [{lower}, {upper}]")

    bucketed = _with_bucket_labels(data, buckets)
    report = check_t_closeness(bucketed, [buckets.column], t, partition.as_equivalence_classes(bucketed))
    if not report.satisfied:
        worst = max(report.per_class, key=lambda item: float(item[1]))
        raise Infeasible(worst[0], 0, f"class is at distance {worst[1]} > t={t}")

    logger.info(f"Built {len(classes)} classes of sizes {list(e_sizes)} with strategy '{qi_strategy}'")
    return partition


def _with_bucket_labels(data: Microdata, buckets: Bucketization) -> Microdata:
    attr = data.attribute(buckets.column)
    bucket_of = buckets.bucket_of()
    labels = buckets.labels
    released = AttributeSchema(name=attr.name, role=AttributeRole.CONFIDENTIAL, kind=AttributeKind.CATEGORICAL)
    return data.replace_columns({attr.name: (released, [labels[bucket_of[i]] for i in range(data.N)])})


def recode_quasi_identifiers(data: Microdata, classes: Sequence[PartitionClass]) -> Microdata:
    """Replace quasi-identifiers by a class-level value.

    Numeric columns take the class mean; ordinal columns the value range
    ``lo..hi`` (or the single value); categorical columns the value set ``{a|b}``.
    """
    replacements = {}
    for attr in data.quasi_identifiers:
        values = data.column(attr.name)
        recoded: list[Cell] = list(values)
        for cls in classes:
            members = [values[i] for i in cls.record_indices]
            if attr.kind is AttributeKind.NUMERIC:
                label: Cell = math.fsum(members) / len(members)
            elif attr.kind is AttributeKind.ORDINAL:
                ordered = sorted(set(members), key=attr.rank)
                label = ordered[0] if len(ordered) == 1 else f"{ordered[0]}..{ordered[-1]}"
            else:
                distinct = sorted(set(members))
                label = distinct[0] if len(distinct) == 1 else "{" + "|".join(distinct) + "}"
            for i in cls.record_indices:
                recoded[i] = label
        kind = AttributeKind.NUMERIC if attr.kind is AttributeKind.NUMERIC else AttributeKind.CATEGORICAL
        replacements[attr.name] = (
            AttributeSchema(name=attr.name, role=attr.role, kind=kind, bounds=attr.bounds),
            recoded,
        )
    return data.replace_columns(replacements)


def anonymize_t_close(
    data: Microdata,
    conf_column: str,
    t: int,
    l: int = 1,
    qi_strategy: str = DEFAULT_STRATEGY,
) -> AnonymizedDataset:
    """Produce a k-anonymous t-close release of ``data``.

    Args:
        data: Original table
        conf_column: Numeric, ordinal or categorical confidential column to bucketize
        t: Integer closeness level
        l: Number of classes emphasizing each bucket
        qi_strategy: Record selection inside the quotas ("greedy-seed" or "sorted-scan")

    Returns:
        AnonymizedDataset: Release, row provenance and a satisfied certificate
    """
    buckets = optimal_buckets(data, conf_column, t)
    partition = build_partition(data, buckets, t, l, qi_strategy)

    attr = data.attribute(conf_column)
    bucket_of = buckets.bucket_of()
    range_column = AttributeSchema(
        name=f"{conf_column}_range", role=AttributeRole.CONFIDENTIAL, kind=AttributeKind.CATEGORICAL
    )
    release = recode_quasi_identifiers(data, partition.classes).replace_columns(
        {
            conf_column: (
                AttributeSchema(name=attr.name, role=AttributeRole.CONFIDENTIAL, kind=AttributeKind.CATEGORICAL),
                [buckets.labels[bucket_of[i]] for i in range(data.N)],
            )
        },
        appended=[(range_column, [buckets.ranges[bucket_of[i]] for i in range(data.N)])],
    )

    certificate = check_t_closeness(release, [conf_column], t, partition.as_equivalence_classes(release))
    if not certificate.satisfied:
        raise Infeasible(0, 0, f"release certificate reports {certificate.achieved_t} > t={t}")

    released_classes = equivalence_classes(release)
    if len(released_classes) < len(partition.classes):
        logger.warning(
            f"{len(partition.classes)} classes recode to only {len(released_classes)} distinct QI tuples"
        )

    class_of = {i: cls.class_id for cls in partition.classes for i in cls.record_indices}
    provenance = tuple((class_of[i], bucket_of[i] + 1) for i in range(data.N))
    logger.info(f"t-close release: N={data.N}, k={partition.k}, achieved t={certificate.achieved_t}")
    return AnonymizedDataset(
        data=release, provenance=provenance, partition=partition, certificate=certificate, bucketization=buckets
    )
