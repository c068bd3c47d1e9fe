"""Binomial logistic regression shared by the psychometric and CRR fits.

The model is ``P(success | x) = 1 / (1 + exp(-(a*x + b)))``. Fitting is by
maximum likelihood with iteratively reweighted least squares on grouped
counts, so trial order and grouping never change the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, xlog1py, xlogy

MAX_ITER = 100
LL_TOL = 1e-10


class SeparationError(ValueError):
    """Outcomes are perfectly split by x, so the likelihood has no maximum.

    ``direction`` is -1 when successes sit at the low-x side (the slope runs
    off to minus infinity) and +1 when they sit at the high-x side.
    """

    def __init__(self, message: str, direction: int):
        super().__init__(message)
        self.direction = direction


@dataclass(frozen=True)
class LogisticFit:
    a: float
    b: float
    converged: bool
    iterations: int
    log_likelihood: float

    def __call__(self, x):
        return logistic(x, self.a, self.b)


def logistic(x, a: float, b: float):
    return expit(a * np.asarray(x, dtype=np.float64) + b)


def group_counts(x: Sequence[float], successes: Sequence[float], trials: Sequence[float]):
    """Merge rows that share an x value; returns sorted (x, successes, trials)."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(successes, dtype=np.float64)
    n = np.asarray(trials, dtype=np.float64)
    if not (x.shape == k.shape == n.shape) or x.ndim != 1:
        raise ValueError("x, successes and trials must be 1-D and equally long")
    if np.any(n <= 0) or np.any(k < 0) or np.any(k > n):
        raise ValueError("need trials >= 1 and 0 <= successes <= trials")
    ux, inv = np.unique(x, return_inverse=True)
    return ux, np.bincount(inv, weights=k), np.bincount(inv, weights=n)


def _log_likelihood(x, k, n, a, b):
    p = expit(a * x + b)
    return float(np.sum(xlogy(k, p) + xlog1py(n - k, -p)))


def check_separation(x, k, n) -> None:
    """Raise :class:`SeparationError` unless a finite maximum exists.

    With one predictor and an intercept the maximum exists exactly when
    successes and failures overlap on both sides: some success lies below
    some failure and some failure lies below some success.
    """
    has_s, has_f = k > 0, k < n
    if not has_s.any() or not has_f.any():
        direction = -1 if not has_f.any() else 1
        raise SeparationError("all outcomes are identical", direction)
    if not x[has_s].min() < x[has_f].max():
        raise SeparationError("every success lies at or above every failure", 1)
    if not x[has_f].min() < x[has_s].max():
        raise SeparationError("every success lies at or below every failure", -1)


def fit_logistic(
    x: Sequence[float],
    successes: Sequence[float],
    trials: Sequence[float],
    max_iter: int = MAX_ITER,
    tol: float = LL_TOL,
) -> LogisticFit:
    """Maximum-likelihood (a, b) by Newton/IRLS with step halving.

    Iteration stops when the log-likelihood improves by less than ``tol`` or
    after ``max_iter`` steps; ``converged`` tells which.

    Raises
    ------
    ValueError
        Fewer than two distinct x values.
    SeparationError
        Complete or quasi-complete separation.
    """
    x, k, n = group_counts(x, successes, trials)
    if x.size < 2:
        raise ValueError("need at least two distinct x values")
    check_separation(x, k, n)

    # centring x keeps the 2x2 system well conditioned
    xc = x - np.average(x, weights=n)
    p0 = k.sum() / n.sum()
    beta = np.array([0.0, math.log(p0 / (1.0 - p0))])
    design = np.column_stack([xc, np.ones_like(xc)])
    ll = _log_likelihood(xc, k, n, *beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(design @ beta)
        w = n * p * (1.0 - p)
        grad = design.T @ (k - n * p)
        info = design.T @ (design * w[:, None])
        step = np.linalg.solve(info, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _log_likelihood(xc, k, n, *cand)
            if ll_new >= ll or t < 1e-8:
                break
            t *= 0.5
        gain = ll_new - ll
        if gain > 0:
            beta, ll = cand, ll_new
        if gain < tol:
            converged = True
            break
    a, bc = float(beta[0]), float(beta[1])
    b = bc - a * float(np.average(x, weights=n))
    return LogisticFit(a, b, converged, it, _log_likelihood(x, k, n, a, b))
