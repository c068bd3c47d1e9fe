"""Masked Hamming distance, noise exclusion, CRR and threshold selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encode import IrisCode

HD_AUTH = 0.37
DEFAULT_MAX_SHIFT = 8
NOISE_EXCLUSION = 0.75


class NoComparableBitsError(ValueError):
    pass


class UndefinedCRRError(ValueError):
    pass


class ThresholdSelectionError(ValueError):
    pass


@dataclass(frozen=True)
class MatchReport:
    hd: float
    usable_bits: int
    authenticated: bool
    shift_applied: int


def exclude_noisy(code: IrisCode, limit: float = NOISE_EXCLUSION) -> bool:
    """True when at least ``limit`` of the code's bits are masked as noise."""
    return code.noise_fraction >= limit


def shift_order(max_shift: int) -> list[int]:
    """0, -1, +1, -2, +2, ...: the tie-breaking order for equal distances."""
    order = [0]
    for k in range(1, max_shift + 1):
        order += [-k, k]
    return order


def hamming_distance(
    source: IrisCode,
    target: IrisCode,
    max_shift: int = DEFAULT_MAX_SHIFT,
    threshold: float = HD_AUTH,
) -> MatchReport:
    """Fractional Hamming distance over bits valid in both masks.

    The target is rotated by every shift in ``[-max_shift, max_shift]`` and the
    smallest distance is kept; ``max_shift=0`` compares the codes as given.
    """
    if source.shape != target.shape:
        raise ValueError(f"code shapes differ: {source.shape} vs {target.shape}")
    s_bits, s_mask = source.packed_bits(), source.packed_mask()
    best = None
    for k in shift_order(max_shift):
        t = target.rotate(k) if k else target
        both = s_mask & t.packed_mask()
        usable = int(np.bitwise_count(both).sum())
        if usable == 0:
            continue
        disagree = int(np.bitwise_count((s_bits ^ t.packed_bits()) & both).sum())
        hd = disagree / usable
        if best is None or hd < best[0]:
            best = (hd, usable, k)
    if best is None:
        raise NoComparableBitsError("no bit is valid in both masks at any shift")
    hd, usable, k = best
    ok = hd < threshold and not exclude_noisy(source) and not exclude_noisy(target)
    return MatchReport(hd, usable, ok, k)


def _stack(codes: Sequence[IrisCode]):
    bits = np.stack([c.bits for c in codes]).astype(np.float32)
    mask = np.stack([c.mask for c in codes]).astype(np.float32)
    return bits, mask


def pairwise_hd(
    sources: Sequence[IrisCode],
    targets: Sequence[IrisCode],
    max_shift: int = DEFAULT_MAX_SHIFT,
) -> np.ndarray:
    """Matrix of minimum-over-shift distances; NaN where nothing is comparable.

    Counts come from matrix products, which are exact in float32 for codes
    under 2**24 bits, and give the same values and tie-breaking as
    :func:`hamming_distance`.
    """
    a_bits, a_mask = _stack(sources)
    b_bits, b_mask = _stack(targets)
    n_a, n_b = len(sources), len(targets)
    a_one = (a_bits * a_mask).reshape(n_a, -1)
    a_zero = ((1 - a_bits) * a_mask).reshape(n_a, -1)
    a_m = a_mask.reshape(n_a, -1)
    best = np.full((n_a, n_b), np.inf)
    for k in shift_order(max_shift):
        bb = np.roll(b_bits, k, axis=2)
        bm = np.roll(b_mask, k, axis=2)
        b_one = (bb * bm).reshape(n_b, -1).T
        b_zero = ((1 - bb) * bm).reshape(n_b, -1).T
        usable = (a_m @ bm.reshape(n_b, -1).T).astype(np.int64)
        disagree = (a_one @ b_zero + a_zero @ b_one).astype(np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            hd = np.where(usable > 0, disagree / np.maximum(usable, 1), np.inf)
        np.minimum(best, hd, out=best)
    best[np.isinf(best)] = np.nan
    return best


def crr_from_hds(hds: Sequence[float], threshold: float = HD_AUTH) -> float:
    """Percentage of distances strictly below ``threshold``."""
    hds = np.asarray([h for h in hds if not math.isnan(h)], dtype=np.float64)
    if hds.size == 0:
        raise UndefinedCRRError("no comparable pairs")
    return 100.0 * float(np.mean(hds < threshold))


def crr(
    source_frames: Sequence[IrisCode],
    target_frames: Sequence[IrisCode] | None = None,
    threshold: float = HD_AUTH,
    max_shift: int = DEFAULT_MAX_SHIFT,
) -> float:
    """Correct recognition rate (percent) between two frame collections.

    Noisy codes are dropped first. With ``target_frames=None`` (or the same
    list object) the sources are compared among themselves, without
    self-pairs.
    """
    same = target_frames is None or target_frames is source_frames
    src = [c for c in source_frames if not exclude_noisy(c)]
    if same:
        if len(src) < 2:
            raise UndefinedCRRError("fewer than two usable frames")
        m = pairwise_hd(src, src, max_shift)
        hds = m[np.triu_indices(len(src), k=1)]
    else:
        tgt = [c for c in target_frames if not exclude_noisy(c)]
        if not src or not tgt:
            raise UndefinedCRRError("all frames excluded")
        hds = pairwise_hd(src, tgt, max_shift).ravel()
    return crr_from_hds(hds, threshold)


@dataclass(frozen=True)
class HDMatrix:
    identities: list[int]
    mean_hd: np.ndarray  # NaN where a cell has no comparable pair
    match: np.ndarray  # mean_hd < threshold

    def __getitem__(self, key):
        i, j = key
        return self.mean_hd[self.identities.index(i), self.identities.index(j)]


def mean_hd_matrix(
    groups: Mapping[int, Sequence[IrisCode]],
    threshold: float = HD_AUTH,
    max_shift: int = DEFAULT_MAX_SHIFT,
) -> HDMatrix:
    """Mean pairwise distance between every pair of identities' frames.

    Diagonal cells average over distinct frame pairs of one identity.
    """
    if len(groups) < 1:
        raise ValueError("need at least one identity")
    ids = sorted(groups)
    usable = {i: [c for c in groups[i] if not exclude_noisy(c)] for i in ids}
    flat = [c for i in ids for c in usable[i]]
    owner = np.array([i for i in ids for _ in usable[i]])
    full = pairwise_hd(flat, flat, max_shift) if flat else np.zeros((0, 0))
    n = len(ids)
    out = np.full((n, n), np.nan)
    for a, i in enumerate(ids):
        rows = np.nonzero(owner == i)[0]
        for b, j in enumerate(ids):
            cols = np.nonzero(owner == j)[0]
            block = full[np.ix_(rows, cols)]
            if i == j:
                block = block[np.triu_indices(len(rows), k=1)]
            block = block[~np.isnan(block)]
            if block.size:
                out[a, b] = block.mean()
    with np.errstate(invalid="ignore"):
        match = out < threshold
    return HDMatrix(ids, out, match)


@dataclass(frozen=True)
class ThresholdSelection:
    threshold: float
    fpr: float
    tpr: float
    fnr: float
    tnr: float


def select_threshold(
    intra: Sequence[float],
    inter: Sequence[float],
    max_fpr: float = 0.0,
    resolution: float = 0.001,
) -> ThresholdSelection:
    """Largest grid threshold whose false-positive rate stays within ``max_fpr``.

    Candidates are ``resolution, 2*resolution, ..., 1``. A candidate ``t`` is
    admissible when the share of inter-class distances ``<= t`` is at most
    ``max_fpr``; counting ties keeps the grid point strictly below any
    impostor distance. Reported rates use the decision rule ``hd < t``.
    """
    intra = np.asarray(intra, dtype=np.float64)
    inter = np.asarray(inter, dtype=np.float64)
    if intra.size == 0 or inter.size == 0:
        raise ValueError("intra and inter distance lists must be non-empty")
    n = int(round(1.0 / resolution))
    grid = np.round(np.arange(1, n + 1) * resolution, 12)
    fpr_ties = np.searchsorted(np.sort(inter), grid, side="right") / inter.size
    ok = np.nonzero(fpr_ties <= max_fpr + 1e-15)[0]
    if ok.size == 0:
        raise ThresholdSelectionError("no threshold satisfies the false-positive limit")
    t = float(grid[ok[-1]])
    fpr = float(np.mean(inter < t))
    tpr = float(np.mean(intra < t))
    return ThresholdSelection(t, fpr, tpr, 1.0 - tpr, 1.0 - fpr)
