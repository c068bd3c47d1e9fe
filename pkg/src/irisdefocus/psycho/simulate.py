"""Synthetic participants for exercising the analysis end to end.

Attentive participants answer from the logistic implied by the published
per-participant PSE/DT pairs. A few inattentive ones answer ``different``
most of the time even for identical animations, so the exclusion rule has
something to remove. Likert ratings start near 4 and fall with defocus.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from ..synth import mix_seed
from .fit import PUBLISHED_THRESHOLDS, PsychometricFit, TrialResponse, simulate_responses
from .stats import ATTRIBUTES, LikertTable

LEVELS = (0.0, 1.0, 3.0, 5.0, 8.0)
TRIALS_PER_LEVEL = 12  # six animations, each shown on both sides
ANIMATIONS = 6


def simulate_study(
    seed: int,
    levels: Sequence[float] = LEVELS,
    trials_per_level: int = TRIALS_PER_LEVEL,
    inattentive: int = 4,
) -> list[TrialResponse]:
    out = []
    for i, (pid, pse, dt) in enumerate(PUBLISHED_THRESHOLDS):
        fit = PsychometricFit.from_thresholds(pse, dt)
        rng = np.random.default_rng(mix_seed(seed, 0x5D, i))
        out += simulate_responses(pid, fit.a, fit.b, levels, trials_per_level, rng)
    for j in range(inattentive):
        rng = np.random.default_rng(mix_seed(seed, 0x1A, j))
        # mostly "different" regardless of the stimulus
        out += simulate_responses(f"X{j + 1:02d}", -0.05, -1.5, levels, trials_per_level, rng)
    return out


def simulate_likert(
    seed: int,
    participants: int = 16,
    levels: Sequence[float] = LEVELS,
    animations: int = ANIMATIONS,
) -> dict[str, LikertTable]:
    """Ordinal ratings from a latent score ``4 - drop(sigma)`` plus noise."""
    tables = {}
    rows = [f"P{p + 1:02d}/{a + 1}" for p in range(participants) for a in range(animations)]
    lv = np.asarray(levels, dtype=np.float64)
    drop = 2.5 * expit(1.2 * (lv - 4.5))
    for k, attr in enumerate(ATTRIBUTES):
        rng = np.random.default_rng(mix_seed(seed, 0x11, k))
        bias = rng.normal(0.0, 0.4, size=(participants, 1)).repeat(animations, axis=0)
        latent = 4.0 - drop[None, :] + bias + rng.normal(0.0, 0.6, size=(len(rows), lv.size))
        ratings = np.clip(np.rint(latent), 1, 5).astype(np.int64)
        tables[attr] = LikertTable(attr, tuple(float(v) for v in lv), ratings, tuple(rows))
    return tables
