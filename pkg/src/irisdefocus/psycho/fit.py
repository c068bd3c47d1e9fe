"""Psychometric curves for the same/different avatar task.

The miss rate is the share of ``same`` answers at a defocus level. A
logistic ``f(sigma) = 1 / (1 + exp(-(a sigma + b)))`` is fitted to it; the
point of subjective equality (PSE) is where f = 0.5 and the detection
threshold (DT) is where f falls to the DT criterion, 0.25 by default.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit, logit

from ..logistic import SeparationError, fit_logistic, logistic

SAME, DIFFERENT = "same", "different"
DT_CRITERION = 0.25
EXCLUSION_LIMIT = 0.5


class UndefinedThresholdError(ValueError):
    """The fitted slope is zero, so PSE and DT do not exist."""


@dataclass(frozen=True)
class TrialResponse:
    participant_id: str
    sigma_px: float
    response: str

    def __post_init__(self):
        if self.response not in (SAME, DIFFERENT):
            raise ValueError(f"response must be '{SAME}' or '{DIFFERENT}', got {self.response!r}")
        if not self.sigma_px >= 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class PsychometricFit:
    a: float
    b: float
    pse: float
    dt: float
    converged: bool
    dt_criterion: float = DT_CRITERION

    @classmethod
    def from_params(cls, a: float, b: float, converged: bool = True,
                    dt_criterion: float = DT_CRITERION) -> "PsychometricFit":
        if a == 0 or not math.isfinite(a):
            raise UndefinedThresholdError("slope is zero or not finite; PSE/DT undefined")
        if not 0 < dt_criterion < 1:
            raise ValueError("DT criterion must lie in (0, 1)")
        pse = -b / a
        dt = float((logit(dt_criterion) - b) / a)
        return cls(float(a), float(b), float(pse), dt, bool(converged), dt_criterion)

    @classmethod
    def from_thresholds(cls, pse: float, dt: float,
                        dt_criterion: float = DT_CRITERION) -> "PsychometricFit":
        """Invert the PSE/DT closed forms: the curve through both points."""
        if dt == pse:
            raise UndefinedThresholdError("PSE and DT coincide")
        a = float(logit(dt_criterion)) / (dt - pse)
        return cls.from_params(a, -a * pse, True, dt_criterion)

    def __call__(self, sigma):
        return logistic(sigma, self.a, self.b)


@dataclass(frozen=True)
class MissRates:
    rates: dict[float, float]
    missing: tuple[float, ...] = ()  # requested levels without any response


def miss_rate(responses: Iterable[TrialResponse], levels: Sequence[float] | None = None) -> MissRates:
    """Fraction of ``same`` answers per defocus level.

    Levels listed in ``levels`` that have no responses get NaN and are
    flagged in ``missing``.
    """
    same, total = defaultdict(int), defaultdict(int)
    for r in responses:
        total[r.sigma_px] += 1
        same[r.sigma_px] += r.response == SAME
    keys = sorted(total) if levels is None else [float(v) for v in levels]
    rates, missing = {}, []
    for s in keys:
        if total.get(s, 0) == 0:
            rates[s] = math.nan
            missing.append(s)
        else:
            rates[s] = same[s] / total[s]
    return MissRates(rates, tuple(missing))


@dataclass(frozen=True)
class Exclusion:
    kept: list[str]
    excluded: list[str]


def exclude_participants(
    by_participant: Mapping[str, Sequence[TrialResponse]],
    limit: float = EXCLUSION_LIMIT,
) -> Exclusion:
    """Drop participants who answered ``different`` at sigma = 0 at least ``limit`` of the time.

    Identical animations were shown at sigma = 0, so such participants
    misread the task.
    """
    kept, excluded = [], []
    for pid in sorted(by_participant):
        zero = [r for r in by_participant[pid] if r.sigma_px == 0]
        if not zero:
            raise ValueError(f"participant {pid} has no sigma = 0 trials")
        diff = sum(r.response == DIFFERENT for r in zero) / len(zero)
        (excluded if diff >= limit else kept).append(pid)
    return Exclusion(kept, excluded)


def group_by_participant(responses: Iterable[TrialResponse]) -> dict[str, list[TrialResponse]]:
    out: dict[str, list[TrialResponse]] = defaultdict(list)
    for r in responses:
        out[r.participant_id].append(r)
    return dict(out)


def fit_psychometric(responses: Sequence[TrialResponse],
                     dt_criterion: float = DT_CRITERION) -> PsychometricFit:
    """Trial-level maximum-likelihood fit of P(same) against sigma.

    Raises
    ------
    SeparationError
        ``same`` and ``different`` answers are perfectly split by sigma.
    UndefinedThresholdError
        The fitted slope is zero (flat responses).
    """
    if not responses:
        raise ValueError("no responses")
    sig = np.array([r.sigma_px for r in responses])
    same = np.array([r.response == SAME for r in responses], dtype=np.float64)
    fit = fit_logistic(sig, same, np.ones_like(same))
    if fit.a == 0:
        raise UndefinedThresholdError("flat responses: slope is zero")
    return PsychometricFit.from_params(fit.a, fit.b, fit.converged, dt_criterion)


def fit_rates_least_squares(sigmas: Sequence[float], rates: Sequence[float],
                            dt_criterion: float = DT_CRITERION) -> PsychometricFit:
    """Unweighted least-squares logistic through averaged miss rates."""
    x = np.asarray(sigmas, dtype=np.float64)
    y = np.asarray(rates, dtype=np.float64)
    keep = ~np.isnan(y)
    x, y = x[keep], y[keep]
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct sigma levels")
    # start from a straight line through the clipped logits
    z = logit(np.clip(y, 0.02, 0.98))
    a0, b0 = np.polyfit(x, z, 1)
    if a0 == 0:
        a0 = -1e-3
    res = least_squares(lambda p: expit(p[0] * x + p[1]) - y, [a0, b0], method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
    return PsychometricFit.from_params(float(res.x[0]), float(res.x[1]), bool(res.success),
                                       dt_criterion)


def pooled_curve(per_participant: Mapping[str, Mapping[float, float]],
                 dt_criterion: float = DT_CRITERION) -> PsychometricFit:
    """Average the miss rates across participants per level, then fit the averages."""
    if not per_participant:
        raise ValueError("need at least one participant")
    levels = sorted({s for rates in per_participant.values() for s in rates})
    means = []
    for s in levels:
        vals = [rates[s] for rates in per_participant.values()
                if s in rates and not math.isnan(rates[s])]
        means.append(float(np.mean(vals)) if vals else math.nan)
    return fit_rates_least_squares(levels, means, dt_criterion)


@dataclass(frozen=True)
class ThresholdSummary:
    n: int
    mean_pse: float
    mean_dt: float
    std_pse: float
    std_dt: float


def summarize_thresholds(pse: Sequence[float], dt: Sequence[float]) -> ThresholdSummary:
    """Mean and sample standard deviation of per-participant PSE and DT."""
    pse = np.asarray(pse, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    if pse.size == 0 or pse.shape != dt.shape:
        raise ValueError("need equally many PSE and DT values")
    sd = (lambda v: float(np.std(v, ddof=1)) if v.size > 1 else 0.0)
    return ThresholdSummary(int(pse.size), float(pse.mean()), float(dt.mean()), sd(pse), sd(dt))


# Per-participant PSE and DT published for the same/different study
# (participant, PSE, DT); the published table lists these fifteen rows.
PUBLISHED_THRESHOLDS: tuple[tuple[str, float, float], ...] = (
    ("S01", 3.22, 4.21), ("S02", 1.90, 4.07), ("S05", 4.58, 6.56),
    ("S06", 4.42, 8.21), ("S07", 6.06, 8.38), ("S08", 4.74, 7.17),
    ("S09", 3.08, 6.20), ("S12", 2.49, 4.47), ("S13", 3.88, 5.46),
    ("S14", 2.61, 3.79), ("S15", 1.70, 3.90), ("S16", 2.80, 4.21),
    ("S17", 3.31, 4.75), ("S18", 1.97, 3.64), ("S19", 4.84, 8.21),
)
PUBLISHED_AVERAGE = (3.50, 5.67)
PUBLISHED_STD = (1.30, 1.73)


def published_summary() -> ThresholdSummary:
    _, pse, dt = zip(*PUBLISHED_THRESHOLDS)
    return summarize_thresholds(pse, dt)


def simulate_responses(
    participant_id: str,
    a: float,
    b: float,
    levels: Sequence[float],
    trials_per_level: int,
    rng: np.random.Generator,
) -> list[TrialResponse]:
    """Bernoulli ``same`` answers drawn from a known logistic."""
    out = []
    for s in levels:
        p = float(expit(a * s + b))
        for same in rng.random(trials_per_level) < p:
            out.append(TrialResponse(participant_id, float(s), SAME if same else DIFFERENT))
    return out


__all__ = [
    "DIFFERENT", "DT_CRITERION", "EXCLUSION_LIMIT", "Exclusion", "MissRates",
    "PUBLISHED_AVERAGE", "PUBLISHED_STD", "PUBLISHED_THRESHOLDS", "PsychometricFit",
    "SAME", "SeparationError", "ThresholdSummary", "TrialResponse",
    "UndefinedThresholdError", "exclude_participants", "fit_psychometric",
    "fit_rates_least_squares", "group_by_participant", "miss_rate", "pooled_curve",
    "published_summary", "simulate_responses", "summarize_thresholds",
]
