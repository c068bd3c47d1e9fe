"""Rank statistics for the Likert ratings: Friedman, Wilcoxon signed-rank, Bonferroni."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaincc, ndtr
from scipy.stats import rankdata

ATTRIBUTES = ("truthfulness", "naturalness", "attentiveness", "comfort", "eye_contact")
EXACT_MAX_N = 20


@dataclass(frozen=True)
class LikertTable:
    """Ratings 1..5 for N participants (rows) under k conditions (columns)."""

    attribute: str
    levels: tuple[float, ...]
    ratings: np.ndarray
    participants: tuple[str, ...] = ()

    def __post_init__(self):
        r = np.asarray(self.ratings)
        if r.ndim != 2 or r.shape[1] != len(self.levels):
            raise ValueError("ratings must be N x k with one column per level")
        if np.any(np.isnan(r.astype(float))):
            raise ValueError("ratings table is incomplete")
        if not np.all(np.isin(r, [1, 2, 3, 4, 5])):
            raise ValueError("ratings must be integers 1..5")
        object.__setattr__(self, "ratings", r.astype(np.int64))
        if not self.participants:
            object.__setattr__(self, "participants",
                               tuple(str(i) for i in range(r.shape[0])))


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function via the regularized upper incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class FriedmanResult:
    chi_sq: float
    df: int
    p: float


def friedman_statistic(ratings: np.ndarray) -> float:
    """Tie-corrected Friedman chi-square; 0 when every row is constant."""
    r = np.asarray(ratings, dtype=np.float64)
    n, k = r.shape
    ranks = np.apply_along_axis(rankdata, 1, r)
    rank_sums = ranks.sum(axis=0)
    ties = 0.0
    for row in r:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts ** 3 - counts))
    denom = 1.0 - ties / (n * (k ** 3 - k))
    if denom <= 1e-12:
        return 0.0
    chi = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums ** 2)) - 3.0 * n * (k + 1)
    return max(chi / denom, 0.0)


def friedman_test(table: LikertTable | np.ndarray) -> FriedmanResult:
    """Friedman test across conditions with an asymptotic chi-square p-value."""
    r = table.ratings if isinstance(table, LikertTable) else np.asarray(table)
    if r.ndim != 2:
        raise ValueError("ratings must be a 2-D table")
    n, k = r.shape
    if n < 2 or k < 2:
        raise ValueError("Friedman test needs at least 2 participants and 2 conditions")
    chi = friedman_statistic(r)
    return FriedmanResult(chi, k - 1, chi2_sf(chi, k - 1) if chi > 0 else 1.0)


def friedman_permutation_p(ratings: np.ndarray) -> float:
    """Exact p by enumerating every within-row permutation: (k!)^N tables."""
    r = np.asarray(ratings)
    n, k = r.shape
    observed = friedman_statistic(r)
    perms = list(itertools.permutations(range(k)))
    if len(perms) ** n > 2_000_000:
        raise ValueError("table too large for full enumeration")
    row_options = [[row[list(p)] for p in perms] for row in r]
    hits = total = 0
    for combo in itertools.product(*row_options):
        total += 1
        hits += friedman_statistic(np.array(combo)) >= observed - 1e-9
    return hits / total


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    p: float  # two-sided
    w_plus: float
    w_minus: float
    n: int  # non-zero differences
    method: str  # "exact", "normal" or "degenerate"

    @property
    def degenerate(self) -> bool:
        return self.method == "degenerate"


def _exact_lower_tail(doubled_ranks: np.ndarray, w_doubled: int) -> float:
    """P(W+ <= w) under the sign-flip null, counting on doubled (integer) ranks."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return float(counts[:w_doubled + 1].sum() / counts.sum())


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float],
                         exact_max_n: int = EXACT_MAX_N,
                         zero_method: str = "wilcox") -> WilcoxonResult:
    """Paired two-sided signed-rank test.

    Tied magnitudes get average ranks. With ``zero_method="wilcox"`` zero
    differences are dropped before ranking; with ``"pratt"`` they are ranked
    with the rest and then dropped, so they still push the other ranks up.
    Up to ``exact_max_n`` non-zero differences the null distribution is
    enumerated exactly (over doubled ranks so averaged ties stay integral);
    above that a normal approximation with continuity and tie corrections is
    used.
    """
    if zero_method not in ("wilcox", "pratt"):
        raise ValueError("zero_method must be 'wilcox' or 'pratt'")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be paired 1-D sequences")
    d = x - y
    if zero_method == "wilcox":
        d = d[d != 0]
        ranks = rankdata(np.abs(d)) if d.size else np.zeros(0)
    else:
        ranks = rankdata(np.abs(d))
        ranks, d = ranks[d != 0], d[d != 0]
    n = int(d.size)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0.0, 0.0, 0, "degenerate")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = 2.0 * _exact_lower_tail(doubled, int(round(2 * stat)))
        return WilcoxonResult(stat, min(1.0, p), w_plus, w_minus, n, "exact")
    # Under the sign-flip null each rank r adds r or 0 with equal odds, so
    # mean = sum(r)/2 and var = sum(r^2)/4; this already carries the tie
    # correction n(n+1)(2n+1)/24 - sum(t^3 - t)/48.
    mu = float(ranks.sum()) / 2.0
    var = float(np.sum(ranks ** 2)) / 4.0
    z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var)
    p = 2.0 * float(ndtr(-z))
    return WilcoxonResult(stat, min(1.0, p), w_plus, w_minus, n, "normal")


def bonferroni(p: float, m: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if m < 1:
        raise ValueError("need at least one comparison")
    return min(1.0, p * m)


@dataclass(frozen=True)
class PairwiseComparison:
    level_a: float
    level_b: float
    result: WilcoxonResult
    p_adjusted: float


def pairwise_wilcoxon(table: LikertTable) -> list[PairwiseComparison]:
    """Every pair of conditions, Bonferroni-adjusted for the number of pairs."""
    k = len(table.levels)
    pairs = list(itertools.combinations(range(k), 2))
    out = []
    for i, j in pairs:
        res = wilcoxon_signed_rank(table.ratings[:, i], table.ratings[:, j])
        out.append(PairwiseComparison(table.levels[i], table.levels[j], res,
                                      bonferroni(res.p, len(pairs))))
    return out
