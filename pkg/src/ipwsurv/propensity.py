"""Logistic propensity model fitted by IRLS, and ATE/ATT inverse-probability weights."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import AlignmentError, IpwSurvError

SCHEMES = ("ATE", "ATT")


class DegenerateOutcomeError(IpwSurvError, ValueError):
    """Only one treatment class is present."""


class SeparationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PropensityFit:
    coefficients: np.ndarray  # intercept first
    scores: np.ndarray
    clipped: np.ndarray
    raw_scores: np.ndarray
    clip: tuple[float, float] = (0.01, 0.99)
    n_iter: int = 0
    converged: bool = True

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        """Clipped propensity scores for new covariate rows."""
        x = np.column_stack([np.ones(len(covariates)), covariates])
        return np.clip(expit(x @ self.coefficients), *self.clip)


@dataclass(frozen=True)
class WeightVector:
    scheme: str
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)


def expit(u: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_likelihood_gradient(x: np.ndarray, z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of the binomial log-likelihood; ``x`` includes the intercept column."""
    return x.T @ (z - expit(x @ beta))


def fit_logistic(data: Dataset | np.ndarray, treatment: np.ndarray | None = None, *,
                 max_iter: int = 100, tolerance: float = 1e-8,
                 clip: tuple[float, float] = (0.01, 0.99)) -> PropensityFit:
    """Regress treatment on covariates (plus intercept) by Newton-Raphson / IRLS.

    Iterates ``beta <- beta + (X' W X)^{-1} X'(z - p)`` with ``W = diag(p(1-p))``
    until the largest coefficient change drops below ``tolerance``.  Scores are
    the fitted probabilities clipped to ``clip``.
    """
    if isinstance(data, Dataset):
        covariates, z = data.covariates, data.treatment
    else:
        covariates, z = np.asarray(data, dtype=float), treatment
    z = np.asarray(z, dtype=float).ravel()
    if covariates.ndim == 1:
        covariates = covariates.reshape(-1, 1)
    n, m = covariates.shape
    if len(z) != n:
        raise AlignmentError(f"{n} covariate rows but {len(z)} treatment values")
    if n < m + 1:
        raise IpwSurvError(f"need at least {m + 1} records for {m} covariates, got {n}")
    if z.min() == z.max():
        raise DegenerateOutcomeError(f"treatment has a single class ({int(z[0])})")
    lo, hi = clip
    if not 0 < lo <= hi < 1:
        raise IpwSurvError(f"clip bounds must satisfy 0 < lo <= hi < 1, got {clip}")

    x = np.column_stack([np.ones(n), covariates])
    beta = np.zeros(m + 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(x @ beta)
        w = np.maximum(p * (1 - p), 1e-12)
        hess = x.T @ (x * w[:, None])
        step = np.linalg.lstsq(hess, x.T @ (z - p), rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tolerance:
            converged = True
            break
    if np.max(np.abs(beta)) > 30 or not converged:
        warnings.warn(
            f"logistic fit did not settle (max |beta| = {np.max(np.abs(beta)):.3g} after {it} "
            "iterations); data may be separated, scores are clipped", SeparationWarning, stacklevel=2)
    raw = expit(x @ beta)
    scores = np.clip(raw, lo, hi)
    return PropensityFit(beta, scores, (raw < lo) | (raw > hi), raw, (lo, hi), it, converged)


def compute_weights(fit: PropensityFit | np.ndarray, treatments: np.ndarray, scheme: str = "ATE",
                    stabilized: bool = False) -> WeightVector:
    """Inverse-probability-of-treatment weights.

    ATE: ``z/pi + (1-z)/(1-pi)``.  ATT: ``z + pi(1-z)/(1-pi)``.  With
    ``stabilized`` the treated and control terms are multiplied by the
    marginal treated and control fractions respectively.
    """
    pi = np.asarray(fit.scores if isinstance(fit, PropensityFit) else fit, dtype=float)
    z = np.asarray(treatments, dtype=float).ravel()
    if pi.shape != z.shape:
        raise AlignmentError(f"{len(pi)} scores but {len(z)} treatments")
    scheme = scheme.upper()
    if scheme == "ATE":
        treated, control = z / pi, (1 - z) / (1 - pi)
    elif scheme == "ATT":
        treated, control = z, pi * (1 - z) / (1 - pi)
    else:
        raise IpwSurvError(f"unknown weight scheme {scheme!r}; expected one of {SCHEMES}")
    if stabilized:
        p1 = z.mean()
        treated, control = treated * p1, control * (1 - p1)
    return WeightVector(scheme, treated + control)


def unit_weights(n: int) -> WeightVector:
    return WeightVector("none", np.ones(n))
