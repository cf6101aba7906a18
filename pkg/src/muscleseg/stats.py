"""Wilcoxon signed-rank test and Pearson correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

from .errors import AllZeroDifferences, ConstantInput, EmptyInput, TooFewPoints

EXACT_MAX_M = 20
_ALTERNATIVES = ("greater", "less", "two-sided")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "exact" | "normal-approximation"
    n_effective: int

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p_two_sided: float
    n: int


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_tail_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments producing each value of 2*W+.

    Equivalent to enumerating all 2^m sign vectors: each rank is either in
    the positive set or not, so the counts are a subset-sum convolution.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def _exact_p(w_plus: float, ranks: np.ndarray, alternative: str) -> float:
    doubled = np.rint(ranks * 2).astype(np.int64)
    counts = _exact_tail_counts(doubled)
    w2 = int(round(w_plus * 2))
    n_total = float(1 << len(ranks))
    upper = counts[w2:].sum() / n_total
    lower = counts[: w2 + 1].sum() / n_total
    if alternative == "greater":
        return float(upper)
    if alternative == "less":
        return float(lower)
    return float(min(1.0, 2.0 * min(upper, lower)))


def _normal_p(w_plus: float, ranks: np.ndarray, alternative: str) -> float:
    m = len(ranks)
    mean = m * (m + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = m * (m + 1) * (2 * m + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    sd = math.sqrt(var)
    d = w_plus - mean
    if alternative == "greater":
        return float(_st.norm.sf((d - 0.5) / sd))
    if alternative == "less":
        return float(_st.norm.cdf((d + 0.5) / sd))
    z = max(abs(d) - 0.5, 0.0) / sd
    return float(min(1.0, 2.0 * _st.norm.sf(z)))


def wilcoxon_signed_rank(diffs, alternative: str = "greater", exact_max: int = EXACT_MAX_M) -> TestResult:
    """One-sample Wilcoxon signed-rank test on paired differences.

    Zeros are dropped, absolute differences get mid-ranks, and the statistic
    is W+ (sum of ranks of positive differences). With at most ``exact_max``
    retained differences the p-value is the exact permutation tail; beyond
    that a tie-corrected normal approximation with 0.5 continuity correction
    is used.
    """
    if alternative not in _ALTERNATIVES:
        raise ValueError(f"alternative must be one of {_ALTERNATIVES}")
    d = np.asarray(list(diffs), dtype=np.float64)
    if d.size == 0:
        raise EmptyInput("no differences supplied")
    d = d[d != 0]
    if d.size == 0:
        raise AllZeroDifferences("every paired difference is zero")
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    m = d.size
    if m <= exact_max:
        p, method = _exact_p(w_plus, ranks, alternative), "exact"
    else:
        p, method = _normal_p(w_plus, ranks, alternative), "normal-approximation"
    # p must stay in (0, 1]; the smallest exact tail is 2^-m, the normal tail can underflow
    p = min(1.0, max(p, np.finfo(float).tiny))
    return TestResult(w_plus, p, method, m)


def pearson(xs, ys) -> PearsonResult:
    """Sample correlation with a two-sided Student-t p-value (n - 2 dof)."""
    x = np.asarray(list(xs), dtype=np.float64)
    y = np.asarray(list(ys), dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("xs and ys must have the same length")
    n = x.size
    if n < 3:
        raise TooFewPoints(f"pearson needs at least 3 pairs, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("pearson is undefined for a constant sequence")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    if abs(r) >= 1.0 - 1e-12:
        return PearsonResult(math.copysign(1.0, r), 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(_st.t.sf(abs(t), n - 2))
    return PearsonResult(r, min(1.0, p), n)
