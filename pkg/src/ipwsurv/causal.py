"""Counterfactual predictions, MC-dropout prediction intervals and ATE estimation."""
from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from . import network as nn
from .dataset import Dataset
from .errors import ConfigError, UndefinedMetricError
from .propensity import PropensityFit


@dataclass(frozen=True)
class PredictionSummary:
    """Per-subject summary of ``B`` stochastic forward passes (log-time scale)."""

    samples: np.ndarray  # (B, n)
    mean_log: np.ndarray
    sd_log: np.ndarray
    lower_log: np.ndarray
    upper_log: np.ndarray
    level: float

    @property
    def point_time(self) -> np.ndarray:
        return np.exp(self.mean_log)

    @property
    def interval_time(self) -> tuple[np.ndarray, np.ndarray]:
        return np.exp(self.lower_log), np.exp(self.upper_log)

    def interval(self, level: float, method: str = "percentile") -> tuple[np.ndarray, np.ndarray]:
        """Log-scale interval at another level from the same samples."""
        return _interval(self.samples, self.mean_log, self.sd_log, level, method)


def _interval(samples, mean, sd, level, method):
    if not 0 < level < 1:
        raise ConfigError(f"interval level must be in (0, 1), got {level}")
    if method == "percentile":
        tail = 100 * (1 - level) / 2
        return np.percentile(samples, tail, axis=0), np.percentile(samples, 100 - tail, axis=0)
    if method == "normal":
        z = NormalDist().inv_cdf(0.5 + level / 2)
        return mean - z * sd, mean + z * sd
    raise ConfigError(f"unknown interval method {method!r}")


def mc_dropout_predict(model: nn.Network, inputs: np.ndarray, n_samples: int = 100, seed: int = 0,
                       level: float = 0.95, method: str = "percentile") -> PredictionSummary:
    """Run ``n_samples`` train-mode passes with fresh dropout masks and summarize them."""
    if n_samples < 2:
        raise ConfigError(f"need at least 2 dropout samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    samples = np.stack([nn.forward(model, inputs, rng)[0] for _ in range(n_samples)])
    # centring on one draw keeps identical samples exact (a plain mean drifts by rounding)
    dev = samples - samples[0]
    mean = samples[0] + dev.mean(axis=0)
    sd = dev.std(axis=0, ddof=1)
    lo, hi = _interval(samples, mean, sd, level, method)
    return PredictionSummary(samples, mean, sd, lo, hi, level)


def predict_counterfactual(model: nn.Network, covariates: Dataset | np.ndarray, arm: int,
                           treatment_index: int | None = None) -> np.ndarray:
    """Eval-mode log-time predictions with every subject's treatment input set to ``arm``.

    ``covariates`` is either a :class:`Dataset` or a design matrix that already
    contains the treatment column at ``treatment_index``.
    """
    if arm not in (0, 1):
        raise ConfigError(f"arm must be 0 or 1, got {arm}")
    if isinstance(covariates, Dataset):
        x = covariates.design_matrix(arm)
    else:
        if treatment_index is None:
            raise ConfigError("treatment column index is required for a raw design matrix")
        x = np.array(covariates, dtype=float, copy=True)
        if not -x.shape[1] <= treatment_index < x.shape[1]:
            raise ConfigError(f"treatment column {treatment_index} outside {x.shape[1]} inputs")
        x[:, treatment_index] = arm
    return nn.predict(model, x)


@dataclass(frozen=True)
class AteEstimate:
    plug_in: float
    doubly_robust: float
    n: int
    events_only: bool
    std_error: float  # sd of the doubly-robust influence terms / sqrt(n)

    def to_dict(self) -> dict:
        return {"plug_in": self.plug_in, "doubly_robust": self.doubly_robust, "n": self.n,
                "events_only": self.events_only, "std_error": self.std_error}


def ate_from_predictions(time, treatment, scores, pred0, pred1) -> AteEstimate:
    """Plug-in and doubly-robust ATE on the time scale from arm-wise predicted times."""
    t, z, pi, p0, p1 = (np.asarray(a, dtype=float) for a in (time, treatment, scores, pred0, pred1))
    if len(t) == 0:
        raise UndefinedMetricError("no records for ATE estimation")
    resid = t - np.where(z == 1, p1, p0)
    effect = p1 - p0
    terms = (z / pi - (1 - z) / (1 - pi)) * resid + effect
    se = float(terms.std(ddof=1) / np.sqrt(len(t))) if len(t) > 1 else float("nan")
    return AteEstimate(float(effect.mean()), float(terms.mean()), len(t), False, se)


def estimate_ate(model: nn.Network, data: Dataset, fit: PropensityFit | np.ndarray) -> AteEstimate:
    """ATE in time units from a model trained with treatment as an input.

    When any record is censored, only event records enter the estimate and
    ``events_only`` is set on the result.
    """
    scores = np.asarray(fit.scores if isinstance(fit, PropensityFit) else fit, dtype=float)
    if len(scores) != len(data):
        raise ConfigError(f"{len(scores)} propensity scores for {len(data)} records")
    censored = bool(np.any(data.event == 0))
    if censored:
        keep = data.event == 1
        if not keep.any():
            raise UndefinedMetricError("no event records for ATE estimation")
        data, scores = data.subset(np.flatnonzero(keep)), scores[keep]
    p0 = np.exp(predict_counterfactual(model, data, 0))
    p1 = np.exp(predict_counterfactual(model, data, 1))
    est = ate_from_predictions(data.time, data.treatment, scores, p0, p1)
    return AteEstimate(est.plug_in, est.doubly_robust, est.n, censored, est.std_error)
