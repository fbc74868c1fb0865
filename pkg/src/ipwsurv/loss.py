"""Inverse-propensity-weighted squared-error losses for uncensored and right-censored times.

Both losses are sums over records, not means.  Gradients are returned with
respect to the predictions passed in.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError

SCALES = ("log_time", "time")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    scale: str = "log_time"

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale!r}")


def _aligned(*arrays):
    out = [np.asarray(a, dtype=float).ravel() for a in arrays]
    n = len(out[0])
    for a in out[1:]:
        if len(a) != n:
            raise AlignmentError(f"length mismatch: {[len(a) for a in out]}")
    return out


def loss_nc(predictions, targets, weights=None) -> tuple[float, np.ndarray]:
    """``sum_i w_i (pred_i - target_i)^2`` and its gradient ``2 w_i (pred_i - target_i)``."""
    if weights is None:
        weights = np.ones(len(np.asarray(predictions)))
    pred, target, w = _aligned(predictions, targets, weights)
    r = pred - target
    return float(np.sum(w * r * r)), 2.0 * w * r


def loss_rc(predictions, targets, events, weights=None, config: LossConfig | float = 1.0,
            ) -> tuple[float, np.ndarray]:
    """Censoring-aware weighted loss.

    Events contribute ``w (pred - t)^2``.  Censored records contribute
    ``lam * w (pred - t)^2`` only while the prediction falls short of the
    censoring time; at ``pred == t`` the penalty and its gradient are zero.
    """
    lam = config.lam if isinstance(config, LossConfig) else float(config)
    if weights is None:
        weights = np.ones(len(np.asarray(predictions)))
    pred, target, delta, w = _aligned(predictions, targets, events, weights)
    r = pred - target
    active = np.where(delta == 1, 1.0, lam * (pred < target))
    coef = w * active
    return float(np.sum(coef * r * r)), 2.0 * coef * r


def network_loss(log_pred, time, event, weights=None, config: LossConfig = LossConfig(),
                 ) -> tuple[float, np.ndarray]:
    """Evaluate the censored loss from the network's log-time output.

    Residuals are formed on ``config.scale``; the gradient returned is always
    with respect to ``log_pred`` so it can feed straight into backprop.
    """
    log_pred = np.asarray(log_pred, dtype=float)
    time = np.asarray(time, dtype=float)
    if config.scale == "log_time":
        return loss_rc(log_pred, np.log(time), event, weights, config)
    t_hat = np.exp(log_pred)
    value, grad = loss_rc(t_hat, time, event, weights, config)
    return value, grad * t_hat
