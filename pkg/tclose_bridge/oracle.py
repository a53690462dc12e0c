"""Verification harness: synthetic tables and numerical confirmation of the bounds.

Every report is a pure function of its parameters and seed. Runtimes are
measured but only serialized on request, so repeated runs produce identical
JSON lines.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
from loguru import logger
from scipy import stats

from .closeness import check_stochastic_t_closeness, check_t_closeness
from .config import SweepConfig
from .construct import DEFAULT_STRATEGY, anonymize_t_close, recode_quasi_identifiers, verify_quotas
from .dataset import equivalence_classes
from .distance import ratio_distance, ratio_distance_brute
from .dpbridge import anonymize_dp, dp_to_t_bound, laplace_log_density_ratio_bound, verify_pairwise_closeness
from .exceptions import BadSpec, NotTClose
from .models import (
    AttributeKind,
    AttributeRole,
    AttributeSchema,
    DiscreteDistribution,
    Microdata,
    StochasticMechanismSpec,
    SyntheticSpec,
    VerificationReport,
)

QI_COLUMN = "qi_group"
VALUE_COLUMN = "value"
DEFAULT_TOLERANCE = 0.02
INEQUALITY_SLACK = 1e-12
SAMPLED_PAIRS = 64
SKEWED_CYCLE = (2, 4, 6)


def _group_labels(count: int) -> tuple[str, ...]:
    width = max(3, len(str(count)))
    return tuple(f"G{g + 1:0{width}d}" for g in range(count))


def _unit_draws(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.conf_distribution == "uniform":
        return rng.uniform(0.0, 1.0, spec.N)
    if spec.conf_distribution == "skewed":
        return rng.beta(spec.skew_a, spec.skew_b, spec.N)
    c = spec.bimodal_concentration
    low = rng.beta(0.25 * c, 0.75 * c, spec.N)
    high = rng.beta(0.75 * c, 0.25 * c, spec.N)
    return np.where(rng.uniform(0.0, 1.0, spec.N) < 0.5, low, high)


def _unit_cdf(spec: SyntheticSpec) -> Callable[[np.ndarray], np.ndarray]:
    if spec.conf_distribution == "uniform":
        return stats.uniform(0.0, 1.0).cdf
    if spec.conf_distribution == "skewed":
        return stats.beta(spec.skew_a, spec.skew_b).cdf
    c = spec.bimodal_concentration
    low, high = stats.beta(0.25 * c, 0.75 * c), stats.beta(0.75 * c, 0.25 * c)
    return lambda x: 0.5 * low.cdf(x) + 0.5 * high.cdf(x)


def random_dataset(spec: SyntheticSpec) -> Microdata:
    """Synthetic table with an ordinal QI column ``qi_group`` and a numeric confidential ``value``.

    Records of group g carry the label G00g, so the QI column induces exactly
    the requested classes. Values lie in ``spec.value_range``.

    Raises:
        BadSpec: If the group sizes or the value range are inconsistent
    """
    problems = spec.problems()
    if problems:
        raise BadSpec("; ".join(problems))

    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.value_range
    values = lo + (hi - lo) * _unit_draws(spec, rng)

    labels = _group_labels(len(spec.group_sizes))
    groups = [label for label, size in zip(labels, spec.group_sizes) for _ in range(size)]
    schema = (
        AttributeSchema(name=QI_COLUMN, role=AttributeRole.QUASI_IDENTIFIER, kind=AttributeKind.ORDINAL, order=labels),
        AttributeSchema(
            name=VALUE_COLUMN, role=AttributeRole.CONFIDENTIAL, kind=AttributeKind.NUMERIC, bounds=(lo, hi)
        ),
    )
    records = tuple((group, float(value)) for group, value in zip(groups, values))
    return Microdata(schema=schema, records=records)


def goodness_of_fit(data: Microdata, spec: SyntheticSpec, bins: int = 20) -> float:
    """χ² p-value of the ``value`` column against the distribution requested in ``spec``.

    Adjacent bins are pooled until each expects at least five records.
    """
    lo, hi = spec.value_range
    unit = (np.asarray(data.column(VALUE_COLUMN), dtype=np.float64) - lo) / (hi - lo)
    edges = np.linspace(0.0, 1.0, bins + 1)
    observed, _ = np.histogram(unit, bins=edges)
    expected = np.diff(_unit_cdf(spec)(edges)) * unit.size

    pooled_obs, pooled_exp = [], []
    acc_obs = acc_exp = 0.0
    for o, e in zip(observed, expected):
        acc_obs += o
        acc_exp += e
        if acc_exp >= 5.0:
            pooled_obs.append(acc_obs)
            pooled_exp.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if acc_exp > 0 and pooled_exp:
        pooled_obs[-1] += acc_obs
        pooled_exp[-1] += acc_exp
    pooled_exp = np.asarray(pooled_exp) * (sum(pooled_obs) / sum(pooled_exp))
    return float(stats.chisquare(pooled_obs, pooled_exp).pvalue)


def layout_sizes(N: int, layout: str) -> tuple[int, ...]:
    """Class sizes of a sweep layout: ``equal`` (classes of 4) or ``skewed`` (2, 4, 6 repeating).

    A tail too small for the next class joins the last one.
    """
    if layout == "equal":
        cycle: tuple[int, ...] = (4,)
    elif layout == "skewed":
        cycle = SKEWED_CYCLE
    else:
        raise BadSpec(f"unknown class layout '{layout}'")
    sizes: list[int] = []
    while sum(sizes) < N:
        size = cycle[len(sizes) % len(cycle)]
        if sum(sizes) + size > N:
            if sizes:
                sizes[-1] += N - sum(sizes)
            else:
                sizes.append(N)
            break
        sizes.append(size)
    return tuple(sizes)


def _mechanism_for(data: Microdata, epsilon: float) -> StochasticMechanismSpec:
    return StochasticMechanismSpec(scale=data.attribute(VALUE_COLUMN).width / epsilon, column=VALUE_COLUMN)


def verify_dp_to_t(
    spec: SyntheticSpec,
    epsilon: float,
    grid_resolution: int = 10_001,
    tolerance: float = DEFAULT_TOLERANCE,
) -> VerificationReport:
    """Measure the stochastic distance of Laplace outputs on the synthetic classes against dp_to_t_bound.

    A sample of record pairs is also checked for the per-record inequality
    |log f(x; c_i) − log f(x; c_j)| ≤ ε at every grid point.
    """
    started = time.perf_counter()
    data = random_dataset(spec)
    classes = equivalence_classes(data)
    bound = dp_to_t_bound(data.N, [eq.size for eq in classes], epsilon)
    mech = _mechanism_for(data, epsilon)
    report = check_stochastic_t_closeness(data, mech, bound.t, grid_resolution, classes)

    values = data.column(VALUE_COLUMN)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1,)))
    pairs = rng.integers(0, data.N, size=(SAMPLED_PAIRS, 2))
    points = np.linspace(min(values) - 10 * mech.scale, max(values) + 10 * mech.scale, grid_resolution)
    worst_log_ratio = max(
        laplace_log_density_ratio_bound(values[i], values[j], mech.scale, points) for i, j in pairs
    )
    inequality_holds = worst_log_ratio <= epsilon * (1 + INEQUALITY_SLACK) + INEQUALITY_SLACK

    verdict = VerificationReport.judge(
        claim="dp_to_t",
        trials=len(classes),
        worst=float(report.achieved_t),
        bound=bound.t,
        tolerance=tolerance,
        runtime=time.perf_counter() - started,
        details={
            "N": data.N,
            "epsilon": epsilon,
            "class_sizes": [eq.size for eq in classes],
            "conf_distribution": spec.conf_distribution,
            "seed": spec.seed,
            "grid_resolution": grid_resolution,
            "max_record_log_ratio": worst_log_ratio,
        },
    )
    if not inequality_holds:
        verdict = verdict.model_copy(update={"passed": False})
    logger.info(f"dp_to_t N={data.N} eps={epsilon}: {verdict.worst_observed} vs {verdict.bound}")
    return verdict


def verify_dp_pipeline(
    spec: SyntheticSpec,
    k: int,
    epsilon: float,
    seed: int,
    grid_resolution: int = 10_001,
    tolerance: float = DEFAULT_TOLERANCE,
) -> VerificationReport:
    """Run anonymize_dp and check stochastic closeness at the release's certified t.

    The mixtures are centered on the true values of the recoded table, with
    the classes the release was built from.
    """
    started = time.perf_counter()
    data = random_dataset(spec)
    release = anonymize_dp(data, k, epsilon, seed)
    before_noise = recode_quasi_identifiers(data, release.partition.classes)
    column_epsilon = release.bound.column_epsilons[VALUE_COLUMN]
    report = check_stochastic_t_closeness(
        before_noise,
        _mechanism_for(data, column_epsilon),
        release.bound.t,
        grid_resolution,
        release.partition.as_equivalence_classes(before_noise),
    )
    return VerificationReport.judge(
        claim="dp_pipeline",
        trials=len(release.partition.classes),
        worst=float(report.achieved_t),
        bound=release.bound.t,
        tolerance=tolerance,
        runtime=time.perf_counter() - started,
        details={
            "N": data.N,
            "k": k,
            "epsilon": epsilon,
            "seed": seed,
            "class_sizes": list(release.partition.e_sizes),
        },
    )


def verify_t_construction(
    N: int,
    t: int,
    l: int,
    trials: int,
    seed: int,
    conf_distribution: str = "uniform",
    qi_strategy: str = DEFAULT_STRATEGY,
) -> VerificationReport:
    """Build ``trials`` random t-close releases and re-check each one independently."""
    started = time.perf_counter()
    worst = 1.0
    failures = []
    for trial in range(trials):
        spec = SyntheticSpec(
            N=N, group_sizes=layout_sizes(N, "equal"), conf_distribution=conf_distribution, seed=seed + trial
        )
        release = anonymize_t_close(random_dataset(spec), VALUE_COLUMN, t, l, qi_strategy)
        report = check_t_closeness(
            release.data, [VALUE_COLUMN], t, release.partition.as_equivalence_classes(release.data)
        )
        violations = verify_quotas(release.partition, release.bucketization, t)
        worst = max(worst, float(report.achieved_t))
        if not report.satisfied or violations:
            failures.append(seed + trial)
        logger.debug(f"construction trial {trial}: achieved {report.achieved_t}")

    verdict = VerificationReport.judge(
        claim="t_construction",
        trials=trials,
        worst=worst,
        bound=float(t),
        tolerance=0.0,
        runtime=time.perf_counter() - started,
        details={"N": N, "t": t, "l": l, "seed": seed, "qi_strategy": qi_strategy, "failed_seeds": failures},
    )
    if failures:
        verdict = verdict.model_copy(update={"passed": False})
    return verdict


def verify_distance_oracle(trials: int = 1000, max_alphabet: int = 12, seed: int = 0) -> VerificationReport:
    """Compare singleton evaluation with subset enumeration on random distribution pairs.

    Masses are small integer counts normalized to one. Every fourth trial
    allows zero counts, so infinite and both-zero cases occur; the rest use
    strictly positive counts and always give finite distances. Any difference
    is a failure.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    mismatches = 0
    infinite = 0
    for trial in range(trials):
        n = int(rng.integers(1, max_alphabet + 1))
        alphabet = tuple(range(n))
        smallest = 0 if trial % 4 == 0 else 1
        pair = []
        for _side in range(2):
            counts = rng.integers(smallest, 6, size=n)
            if counts.sum() == 0:
                counts[int(rng.integers(0, n))] = 1
            total = int(counts.sum())
            pair.append(DiscreteDistribution(alphabet=alphabet, mass=tuple(int(c) / total for c in counts)))
        fast = ratio_distance(*pair)
        exact = ratio_distance_brute(*pair)
        if fast != exact:
            mismatches += 1
            logger.warning(f"singleton {fast} differs from subset maximum {exact} for {pair}")
        infinite += not fast.is_finite

    return VerificationReport.judge(
        claim="distance_oracle",
        trials=trials,
        worst=float(mismatches),
        bound=0.0,
        tolerance=0.0,
        runtime=time.perf_counter() - started,
        details={
            "max_alphabet": max_alphabet,
            "seed": seed,
            "infinite_cases": infinite,
            "finite_cases": trials - infinite,
        },
    )


def verify_pairwise(data: Microdata, t: float, conf_columns: Sequence[str] | None = None) -> VerificationReport:
    """verify_pairwise_closeness, reporting a violated precondition as a failed report."""
    try:
        return verify_pairwise_closeness(data, t, conf_columns)
    except NotTClose as e:
        return VerificationReport(
            claim="t_closeness_pairwise",
            trials=0,
            worst_observed=float(e.distance),
            bound=t,
            passed=False,
            details={"class_id": e.class_id, "reason": str(e)},
        )


def run_sweep(config: SweepConfig, jobs: int = 1) -> list[VerificationReport]:
    """Run every check of the sweep matrix; reports come back in a fixed order."""
    tasks: list[Callable[[], VerificationReport]] = []
    index = 0
    for N in config.sizes:
        for epsilon in config.epsilons:
            for layout in config.layouts:
                sizes = layout_sizes(N, layout)
                spec = SyntheticSpec(
                    N=N,
                    group_sizes=sizes,
                    conf_distribution=config.conf_distribution,
                    value_range=tuple(config.value_range),
                    seed=config.seed + index,
                )
                index += 1
                tasks.append(
                    lambda spec=spec, epsilon=epsilon: verify_dp_to_t(
                        spec, epsilon, config.grid_resolution, config.tolerance
                    )
                )
                tasks.append(
                    lambda spec=spec, epsilon=epsilon, k=min(sizes): verify_dp_pipeline(
                        spec, k, epsilon, spec.seed, config.grid_resolution, config.tolerance
                    )
                )
    for N, t, l in config.construction_cases:
        tasks.append(
            lambda N=N, t=t, l=l: verify_t_construction(
                N, t, l, config.construction_trials, config.seed, config.conf_distribution
            )
        )
    tasks.append(lambda: verify_distance_oracle(1000, 12, config.seed))

    logger.info(f"Running {len(tasks)} verification tasks with {jobs} worker(s)")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        reports = list(pool.map(lambda task: task(), tasks))
    failed = [r.claim for r in reports if not r.passed]
    if failed:
        logger.warning(f"{len(failed)} verification report(s) failed: {failed}")
    return reports


def reports_to_jsonl(reports: Sequence[VerificationReport], with_timing: bool = False) -> str:
    return "".join(json.dumps(report.to_dict(with_timing), ensure_ascii=False) + "\n" for report in reports)
