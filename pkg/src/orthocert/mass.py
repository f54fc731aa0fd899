"""Gaussian posterior mass of weight boxes and of unions of weight boxes.

Single-box mass is a product of per-dimension erf differences, accumulated
in log space so thousand-dimension products stay accurate.  Union mass is
exact inclusion-exclusion over box intersections (every intersection of
axis-aligned boxes is a box), with empty intersections pruning their whole
superset branch.  A Monte-Carlo estimator serves as the independent check,
and ``legacy_merged_mass`` reproduces a known-wrong merge-then-multiply
computation kept only as a regression anti-oracle: it bounds the union mass
from above, never below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .network import PosteriorParams, WeightBox

__all__ = [
    "MassResult",
    "UnionSizeError",
    "box_mass",
    "union_mass_exact",
    "union_mass_mc",
    "legacy_merged_mass",
    "greedy_disjoint_mass",
    "DEFAULT_IE_CAP",
]

DEFAULT_IE_CAP = 25


class UnionSizeError(ValueError):
    """Exact inclusion-exclusion refused; too many boxes for the cap."""


@dataclass(frozen=True)
class MassResult:
    value: float
    method: str
    n_samples: Optional[int] = None
    ci99_half: Optional[float] = None


def _interval_probs(mean, std, lo, hi):
    """P(lo <= N(mean, std^2) <= hi) per dimension, vectorized.

    Uses the complementary form in the tails so the erf difference keeps
    relative accuracy far from the mean.
    """
    inv = 1.0 / (std * math.sqrt(2.0))
    a = (lo - mean) * inv
    b = (hi - mean) * inv
    p = 0.5 * (special.erf(b) - special.erf(a))
    right = a >= 0
    if np.any(right):
        p = np.where(right, 0.5 * (special.erfc(a) - special.erfc(b)), p)
    left = b <= 0
    if np.any(left):
        p = np.where(left, 0.5 * (special.erfc(-b) - special.erfc(-a)), p)
    return np.clip(p, 0.0, 1.0)


def _log_box_mass(posterior: PosteriorParams, lower, upper) -> float:
    """log of the box mass; -inf when any dimension carries zero mass."""
    mean, std = posterior.mean, posterior.std
    degenerate = std == 0
    if np.any(degenerate):
        inside = (lower[degenerate] <= mean[degenerate]) & (mean[degenerate] <= upper[degenerate])
        if not np.all(inside):
            return -math.inf
    live = ~degenerate
    if not np.any(live):
        return 0.0
    p = _interval_probs(mean[live], std[live], lower[live], upper[live])
    if np.any(p <= 0):
        return -math.inf
    return float(np.sum(np.log(p)))


def box_mass(posterior: PosteriorParams, box: WeightBox) -> float:
    """Posterior mass of one box.

    Zero-std dimensions contribute factor 1 when the mean sits inside the
    interval and 0 otherwise (point-mass semantics).
    """
    if box.size != posterior.size:
        raise ValueError("box and posterior dimensions differ")
    return math.exp(_log_box_mass(posterior, box.lower, box.upper))


def _canonical(boxes: Sequence[WeightBox]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deduplicated boxes in a canonical order, for reproducible sums."""
    seen = {}
    for b in boxes:
        key = (b.lower.tobytes(), b.upper.tobytes())
        if key not in seen:
            seen[key] = (b.lower, b.upper)
    return [seen[k] for k in sorted(seen)]


def union_mass_exact(posterior: PosteriorParams, boxes: Sequence[WeightBox],
                     cap: int = DEFAULT_IE_CAP) -> MassResult:
    """Exact mass of the union by inclusion-exclusion over intersections."""
    if not boxes:
        raise ValueError("union_mass_exact needs at least one box")
    items = _canonical(boxes)
    if len(items) > cap:
        raise UnionSizeError(
            f"{len(items)} distinct boxes exceed the exact cap {cap}; "
            "use union_mass_mc or greedy_disjoint_mass")
    terms: list[float] = []

    def descend(start: int, lower, upper, sign: float):
        for i in range(start, len(items)):
            lo = np.maximum(lower, items[i][0])
            hi = np.minimum(upper, items[i][1])
            if np.any(lo > hi):
                continue
            terms.append(sign * math.exp(_log_box_mass(posterior, lo, hi)))
            descend(i + 1, lo, hi, -sign)

    neg_inf = np.full(posterior.size, -np.inf)
    pos_inf = np.full(posterior.size, np.inf)
    descend(0, neg_inf, pos_inf, 1.0)
    total = min(max(math.fsum(terms), 0.0), 1.0)
    return MassResult(value=total, method="exact_ie")


def union_mass_mc(posterior: PosteriorParams, boxes: Sequence[WeightBox],
                  n_samples: int, rng: np.random.Generator,
                  chunk: int = 200_000) -> MassResult:
    """Monte-Carlo union mass with an exact (Clopper-Pearson) 99% interval.

    The reported half-width is the symmetric envelope of that interval, so
    [value - half, value + half] covers the true mass with >= 99% confidence.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    hits = 0
    if boxes:
        lowers = np.stack([b.lower for b in boxes])
        uppers = np.stack([b.upper for b in boxes])
        done = 0
        while done < n_samples:
            n = min(chunk, n_samples - done)
            draws = posterior.mean + posterior.std * rng.standard_normal((n, posterior.size))
            inside = np.zeros(n, dtype=bool)
            for lo, hi in zip(lowers, uppers):
                inside |= np.all((draws >= lo) & (draws <= hi), axis=1)
            hits += int(inside.sum())
            done += n
    p_hat = hits / n_samples
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(0.005, hits, n_samples - hits + 1))
    hi = 1.0 if hits == n_samples else float(stats.beta.ppf(0.995, hits + 1, n_samples - hits))
    half = max(p_hat - lo, hi - p_hat)
    return MassResult(value=p_hat, method="monte_carlo",
                      n_samples=n_samples, ci99_half=half)


def _merge_1d(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def legacy_merged_mass(posterior: PosteriorParams, boxes: Sequence[WeightBox]) -> MassResult:
    """The known-wrong union mass: merge per-dimension, then multiply.

    Each dimension's intervals across all boxes are merged into a disjoint
    1-D union and its probability computed; the per-dimension probabilities
    are then multiplied.  That equals the mass of the Cartesian product of
    the per-dimension unions, a superset of the true union, so the result
    can only overestimate.  Test-only anti-oracle.
    """
    if not boxes:
        raise ValueError("legacy_merged_mass needs at least one box")
    mean, std = posterior.mean, posterior.std
    per_dim = []
    for d in range(posterior.size):
        pieces = _merge_1d([(float(b.lower[d]), float(b.upper[d])) for b in boxes])
        if std[d] == 0:
            if not any(lo <= mean[d] <= hi for lo, hi in pieces):
                return MassResult(value=0.0, method="legacy_merge")
            continue
        probs = [float(_interval_probs(mean[d], std[d], np.float64(lo), np.float64(hi)))
                 for lo, hi in pieces]
        p = probs[0] if len(probs) == 1 else min(math.fsum(probs), 1.0)
        if p <= 0:
            return MassResult(value=0.0, method="legacy_merge")
        per_dim.append(p)
    if not per_dim:
        return MassResult(value=1.0, method="legacy_merge")
    log_total = float(np.sum(np.log(np.asarray(per_dim))))
    return MassResult(value=math.exp(log_total), method="legacy_merge")


def greedy_disjoint_mass(posterior: PosteriorParams, boxes: Sequence[WeightBox]) -> MassResult:
    """Sound lower bound: keep only boxes measure-disjoint from earlier kept ones.

    Kept boxes are pairwise disjoint up to posterior-null overlap, so the sum
    of their masses is exactly the mass of their union, which is contained in
    the full union.
    """
    if not boxes:
        raise ValueError("greedy_disjoint_mass needs at least one box")
    items = _canonical(boxes)
    kept: list[tuple[np.ndarray, np.ndarray]] = []
    total = []
    for lo, hi in items:
        overlaps = False
        for klo, khi in kept:
            ilo = np.maximum(lo, klo)
            ihi = np.minimum(hi, khi)
            if np.all(ilo <= ihi) and _log_box_mass(posterior, ilo, ihi) > -math.inf:
                overlaps = True
                break
        if not overlaps:
            kept.append((lo, hi))
            total.append(math.exp(_log_box_mass(posterior, lo, hi)))
    return MassResult(value=min(math.fsum(total), 1.0), method="disjoint_lower_bound")
