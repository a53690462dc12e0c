"""Multiplicative ratio distance between distributions.

d(D1, D2) = max over events S of max(P1(S)/P2(S), P2(S)/P1(S)). Events where
both probabilities vanish are ignored and a one-sided zero makes the distance
INFINITE. For discrete distributions the maximum is attained on singletons,
which is what ``ratio_distance`` evaluates; ``ratio_distance_brute`` walks
every subset and serves as its oracle.
"""

from __future__ import annotations

import math
import sys
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from .exceptions import (
    AlphabetMismatch,
    AlphabetTooLarge,
    EmptyInput,
    GridMismatch,
    NotNormalized,
    UnknownLabel,
)
from .models import IDENTICAL, INFINITE, DensityGrid, DiscreteDistribution, ExtendedDistance

BRUTE_FORCE_LIMIT = 20
DEFAULT_GRID_RESOLUTION = 10_001
DEFAULT_TAIL_SCALES = 10.0
NORMALIZATION_TOLERANCE = 0.01
MAX_LOG_RATIO = math.log(sys.float_info.max)

# centers are folded into the log-sum-exp in blocks of this many columns
_CENTER_BLOCK = 1024


def empirical_distribution(values: Sequence[Hashable], alphabet: Sequence[Hashable]) -> DiscreteDistribution:
    """Relative frequency of every alphabet label in ``values``."""
    if len(values) == 0:
        raise EmptyInput("cannot build a distribution from no values")
    alphabet = tuple(alphabet)
    position = {label: j for j, label in enumerate(alphabet)}
    counts = np.zeros(len(alphabet), dtype=np.int64)
    for value in values:
        j = position.get(value)
        if j is None:
            raise UnknownLabel(f"value {value!r} is not in the alphabet")
        counts[j] += 1
    n = len(values)
    return DiscreteDistribution(alphabet=alphabet, mass=tuple(float(c) / n for c in counts))


def _two_sided_max(p: np.ndarray, q: np.ndarray) -> ExtendedDistance:
    both_zero = (p == 0) & (q == 0)
    if np.any((p == 0) ^ (q == 0)):
        return INFINITE
    keep = ~both_zero
    if not np.any(keep):
        return IDENTICAL
    p, q = p[keep], q[keep]
    return ExtendedDistance.finite(float(np.max(np.maximum(p / q, q / p))))


def ratio_distance(d1: DiscreteDistribution, d2: DiscreteDistribution) -> ExtendedDistance:
    """Distance computed over individual alphabet values."""
    if d1.alphabet != d2.alphabet:
        raise AlphabetMismatch("distributions are defined on different alphabets")
    return _two_sided_max(d1.probabilities, d2.probabilities)


def _as_common_integers(*masses: Sequence[float]) -> list[list[int]]:
    # binary floats share a power-of-two denominator; scale them all to it
    ratios = [[float(m).as_integer_ratio() for m in mass] for mass in masses]
    denominator = max((d for row in ratios for _, d in row), default=1)
    return [[n * (denominator // d) for n, d in row] for row in ratios]


def ratio_distance_brute(d1: DiscreteDistribution, d2: DiscreteDistribution) -> ExtendedDistance:
    """Exact maximum over every nonempty subset of the alphabet.

    Subset sums are exact integers and the subsets are visited in Gray-code
    order, so each step adds or removes a single label. The result is the
    correctly rounded maximum ratio.
    """
    if d1.alphabet != d2.alphabet:
        raise AlphabetMismatch("distributions are defined on different alphabets")
    n = len(d1.alphabet)
    if n > BRUTE_FORCE_LIMIT:
        raise AlphabetTooLarge(f"alphabet of size {n} exceeds the subset enumeration limit {BRUTE_FORCE_LIMIT}")

    first, second = _as_common_integers(d1.mass, d2.mass)
    best_hi, best_lo = 1, 1
    a = b = 0
    members = 0
    for step in range(1, 1 << n):
        bit = (step & -step).bit_length() - 1
        if members >> bit & 1:
            a -= first[bit]
            b -= second[bit]
        else:
            a += first[bit]
            b += second[bit]
        members ^= 1 << bit

        if a == 0 and b == 0:
            continue
        if a == 0 or b == 0:
            return INFINITE
        hi, lo = (a, b) if a >= b else (b, a)
        if hi * best_lo > best_hi * lo:
            best_hi, best_lo = hi, lo

    return ExtendedDistance.finite(float(Fraction(best_hi, best_lo)))


def bucketized_distance(
    d1: DiscreteDistribution, d2: DiscreteDistribution, groups: Sequence[Sequence[Hashable]]
) -> ExtendedDistance:
    """Distance after merging alphabet labels into the given groups.

    Coarsening can only lower the distance: merged events are a subset of the
    events the fine distance maximizes over.
    """
    if d1.alphabet != d2.alphabet:
        raise AlphabetMismatch("distributions are defined on different alphabets")
    position = {label: j for j, label in enumerate(d1.alphabet)}
    covered = [position.get(label, -1) for group in groups for label in group]
    if sorted(covered) != list(range(len(d1.alphabet))):
        raise UnknownLabel("groups must cover every alphabet label exactly once")

    def merge(d: DiscreteDistribution) -> DiscreteDistribution:
        mass = tuple(math.fsum(d.mass[position[label]] for label in group) for group in groups)
        return DiscreteDistribution(alphabet=tuple(range(len(groups))), mass=mass)

    return ratio_distance(merge(d1), merge(d2))


def density_ratio_sup(g1: DensityGrid, g2: DensityGrid) -> ExtendedDistance:
    """Two-sided density ratio maximized over the grid.

    Both grids must share their points. Sampled densities must integrate to one
    within 1 % by the trapezoid rule; densities given in closed form
    (``log_values`` set) are normalized by construction and skip that check,
    since a peak narrower than the grid spacing defeats the trapezoid rule.
    A ratio too large for a float is reported as INFINITE.
    """
    if g1.points.shape != g2.points.shape or not np.array_equal(g1.points, g2.points):
        raise GridMismatch("densities are evaluated on different grids")
    for grid in (g1, g2):
        if grid.log_values is not None:
            continue
        total = grid.integral()
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise NotNormalized(f"density {grid.label or '<unnamed>'} integrates to {total:.6f}")

    if g1.log_values is not None and g2.log_values is not None:
        lp, lq = g1.log_values, g2.log_values
        p_zero, q_zero = np.isneginf(lp), np.isneginf(lq)
        if np.any(p_zero ^ q_zero):
            return INFINITE
        keep = ~(p_zero & q_zero)
        if not np.any(keep):
            return IDENTICAL
        gap = float(np.max(np.abs(lp[keep] - lq[keep])))
        if gap >= MAX_LOG_RATIO:
            return INFINITE
        return ExtendedDistance.finite(math.exp(gap))

    return _two_sided_max(g1.values, g2.values)


def laplace_mixture_grid(
    groups: Sequence[Sequence[float]],
    scale: float,
    resolution: int = DEFAULT_GRID_RESOLUTION,
    tail_scales: float = DEFAULT_TAIL_SCALES,
    labels: Sequence[str] | None = None,
) -> list[DensityGrid]:
    """Equal-weight Laplace mixtures, one per group of centers, on a shared grid.

    The grid spans [min center − tail_scales·scale, max center + tail_scales·scale]
    and contains every center. Between two neighbouring centers each mixture is
    A·exp(x/scale) + B·exp(−x/scale), so the ratio of two mixtures is monotone
    there and its sup sits on a center; beyond the outermost centers the ratio
    is constant. The grid ratio is therefore exact at any scale.
    """
    if scale <= 0:
        raise ValueError("Laplace scale must be positive")
    if resolution < 3:
        raise ValueError("grid needs at least 3 points")
    if not groups or any(len(centers) == 0 for centers in groups):
        raise EmptyInput("every mixture needs at least one center")

    everything = np.concatenate([np.asarray(centers, dtype=np.float64) for centers in groups])
    lo = float(everything.min()) - tail_scales * scale
    hi = float(everything.max()) + tail_scales * scale
    points = np.union1d(np.linspace(lo, hi, resolution), everything)
    logger.debug(f"Mixture grid: {points.size} points on [{lo:.6g}, {hi:.6g}], scale {scale:.6g}, {len(groups)} groups")

    labels = list(labels) if labels is not None else [f"group{g}" for g in range(len(groups))]
    grids = []
    for label, centers in zip(labels, groups):
        log_values = _laplace_mixture_log_density(points, np.asarray(centers, dtype=np.float64), scale)
        grids.append(DensityGrid(points=points, values=np.exp(log_values), label=label, log_values=log_values))
    return grids


def _laplace_mixture_log_density(points: np.ndarray, centers: np.ndarray, scale: float) -> np.ndarray:
    acc = np.full(points.shape, -np.inf)
    for start in range(0, centers.size, _CENTER_BLOCK):
        block = centers[start:start + _CENTER_BLOCK]
        acc = np.logaddexp(acc, logsumexp(-np.abs(points[:, None] - block[None, :]) / scale, axis=1))
    return acc - math.log(2.0 * scale) - math.log(centers.size)
