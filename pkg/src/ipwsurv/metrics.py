"""Concordance index and squared-error metrics for censored predictions."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import AlignmentError, UndefinedMetricError


@dataclass(frozen=True)
class MetricReport:
    c_index: float
    mse: float
    mse_events_only: float
    n_comparable_pairs: int

    def to_dict(self) -> dict:
        return asdict(self)


def c_index(times, events, predictions) -> tuple[float, int]:
    """Harrell's C with strict time ordering.

    Pair ``(i, j)`` is comparable when ``T_i < T_j`` and record ``i`` had the
    event; it is concordant when ``pred_i < pred_j`` and half-counts on a
    prediction tie.  Returns ``(value, n_comparable_pairs)``.
    """
    t = np.asarray(times, dtype=float).ravel()
    d = np.asarray(events).ravel().astype(bool)
    p = np.asarray(predictions, dtype=float).ravel()
    if not len(t) == len(d) == len(p):
        raise AlignmentError(f"length mismatch: {len(t)}, {len(d)}, {len(p)}")
    if len(t) < 2:
        raise UndefinedMetricError("c-index needs at least two records")
    # rows: i (must be an event), columns: j
    ti, pi = t[d, None], p[d, None]
    comparable = ti < t[None, :]
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise UndefinedMetricError("no comparable pairs")
    concordant = np.count_nonzero(comparable & (pi < p[None, :]))
    ties = np.count_nonzero(comparable & (pi == p[None, :]))
    return (concordant + 0.5 * ties) / n_pairs, n_pairs


def mse(targets, predictions, events=None) -> float:
    """Mean squared residual, over event records only when ``events`` is given."""
    y = np.asarray(targets, dtype=float).ravel()
    p = np.asarray(predictions, dtype=float).ravel()
    if len(y) != len(p):
        raise AlignmentError(f"length mismatch: {len(y)} targets, {len(p)} predictions")
    if events is not None:
        mask = np.asarray(events).ravel().astype(bool)
        if len(mask) != len(y):
            raise AlignmentError(f"length mismatch: {len(mask)} events, {len(y)} targets")
        if not mask.any():
            raise UndefinedMetricError("no event records for events-only MSE")
        y, p = y[mask], p[mask]
    if len(y) == 0:
        raise UndefinedMetricError("MSE of an empty set")
    r = p - y
    return float(np.mean(r * r))


def evaluate(times, events, log_predictions, true_times=None) -> MetricReport:
    """Full metric report on the log scale.

    ``true_times`` (uncensored event times, known in simulations) replaces the
    observed times as the MSE target when supplied.
    """
    log_t = np.log(np.asarray(times, dtype=float))
    target = log_t if true_times is None else np.log(np.asarray(true_times, dtype=float))
    c, pairs = c_index(times, events, log_predictions)
    try:
        mse_ev = mse(log_t, log_predictions, events)
    except UndefinedMetricError:
        mse_ev = float("nan")
    return MetricReport(c, mse(target, log_predictions), mse_ev, pairs)
