"""Full-batch Adam training with early stopping, and exhaustive hyperparameter grid search."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import network as nn
from .dataset import Dataset
from .errors import ConfigError, DivergenceError, IpwSurvError
from .loss import LossConfig, network_loss
from .propensity import WeightVector
from .seeds import derive_seed

log = logging.getLogger(__name__)


class GridExhaustedError(IpwSurvError, RuntimeError):
    """Every grid point diverged."""


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    learning_rate: float = 0.01
    patience: int = 10
    min_delta: float = 1e-4
    weight_scheme: str = "ATE"
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    batch_size: int | None = None

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("patience and max_epochs must be at least 1")
        if self.weight_scheme not in ("ATE", "ATT", "none"):
            raise ConfigError(f"unknown weight scheme {self.weight_scheme!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class FitResult:
    model: nn.Network
    history: list[tuple[float, float]]
    stopped_epoch: int
    best_epoch: int
    best_monitor_loss: float


def monitor_loss(net: nn.Network, data: Dataset, loss: LossConfig) -> float:
    """Unweighted censored loss of eval-mode predictions."""
    value, _ = network_loss(nn.predict(net, data.design_matrix()), data.time, data.event, None, loss)
    return value


def train(train_data: Dataset, monitor_data: Dataset, net_config: nn.NetworkConfig,
          train_config: TrainConfig, weights: WeightVector | np.ndarray | None = None) -> FitResult:
    """Fit one network and return the snapshot from the best monitor epoch.

    One epoch is one pass over the training data (a single step when
    full-batch).  Training halts once the monitor loss has not improved by
    ``min_delta`` for ``patience`` consecutive epochs.
    """
    if len(monitor_data) == 0:
        raise ConfigError("monitor set is empty")
    n = len(train_data)
    if train_config.weight_scheme == "none" or weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if len(w) != n:
            raise ConfigError(f"{len(w)} weights for {n} training records")
    x = train_data.design_matrix()
    time, event = train_data.time, train_data.event
    loss_cfg = train_config.loss

    net = nn.init(net_config)
    state = nn.AdamState.for_network(net, train_config.learning_rate)
    rng = np.random.default_rng(derive_seed(train_config.seed, "dropout"))
    batch = train_config.batch_size or n

    best, best_net, best_epoch, since = math.inf, net, 0, 0
    history: list[tuple[float, float]] = []
    epoch = 0
    for epoch in range(1, train_config.max_epochs + 1):
        order = np.arange(n) if batch >= n else rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            pred, cache = nn.forward(net, x[idx], rng)
            value, grad = network_loss(pred, time[idx], event[idx], w[idx], loss_cfg)
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            try:
                net, state = nn.adam_step(net, nn.backward(net, cache, grad), state)
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}") from None
            total += value
        mon = monitor_loss(net, monitor_data, loss_cfg)
        if not math.isfinite(mon):
            raise DivergenceError(f"non-finite monitor loss at epoch {epoch}")
        history.append((total, mon))
        if mon < best - train_config.min_delta:
            best, best_net, best_epoch, since = mon, net, epoch, 0
        else:
            since += 1
            if since >= train_config.patience:
                break
    return FitResult(best_net, history, epoch, best_epoch, best)


@dataclass(frozen=True)
class GridSpec:
    hidden_layer_counts: tuple[int, ...] = (1, 2, 3)
    nodes_per_layer: tuple[int, ...] = (32, 64, 128, 256)
    learning_rates: tuple[float, ...] = (0.01, 0.001)
    dropout_rates: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    lambdas: tuple[float, ...] = (0.0, 0.01, 0.1, 1.0, 10.0)

    def __post_init__(self):
        for name in ("hidden_layer_counts", "nodes_per_layer", "learning_rates", "dropout_rates", "lambdas"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigError(f"grid axis {name} is empty")
            object.__setattr__(self, name, values)

    def points(self) -> list[tuple[int, int, float, float, float]]:
        return list(itertools.product(self.hidden_layer_counts, self.nodes_per_layer, self.learning_rates,
                                      self.dropout_rates, self.lambdas))

    def __len__(self) -> int:
        return len(self.points())

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class Candidate:
    index: int
    net_config: nn.NetworkConfig
    train_config: TrainConfig

    def row(self) -> dict:
        return {
            "index": self.index,
            "hidden_layers": len(self.net_config.hidden_sizes),
            "nodes": self.net_config.hidden_sizes[0],
            "learning_rate": self.train_config.learning_rate,
            "dropout": self.net_config.dropout_rates[0],
            "lambda": self.train_config.loss.lam,
        }


def candidates(grid: GridSpec, input_dim: int, base: TrainConfig, activation: str = "relu") -> list[Candidate]:
    out = []
    for i, (layers, nodes, lr, drop, lam) in enumerate(grid.points()):
        seed = derive_seed(base.seed, "grid", i)
        net_cfg = nn.NetworkConfig(input_dim, (nodes,) * layers, activation, drop, seed)
        tr_cfg = replace(base, learning_rate=lr, loss=replace(base.loss, lam=lam), seed=seed)
        out.append(Candidate(i, net_cfg, tr_cfg))
    return out


def _run_candidate(args):
    cand, train_data, validation_data, weights = args
    try:
        return train(train_data, validation_data, cand.net_config, cand.train_config, weights)
    except DivergenceError as exc:
        log.info("grid point %d diverged: %s", cand.index, exc)
        return None


@dataclass
class GridResult:
    best: Candidate
    best_result: FitResult
    leaderboard: list[dict]


def grid_search(train_data: Dataset, validation_data: Dataset, grid: GridSpec, base: TrainConfig,
                weights: WeightVector | np.ndarray | None = None, *, activation: str = "relu",
                jobs: int = 1, selection_lambda: float | None = 1.0) -> GridResult:
    """Train one model per grid point and keep the best-scoring model.

    Each candidate early-stops on its own lambda.  Candidates are then ranked
    on the unweighted validation loss at the common ``selection_lambda``, since
    losses at different lambdas are not comparable (lambda 0 drops every
    censored term and would always win).  ``selection_lambda=None`` ranks on
    each candidate's own best monitor loss instead.  Ties go to fewer
    parameters, then smaller lambda, then grid order.  The leaderboard lists
    every point in grid order; diverged points score ``inf``.
    """
    cands = candidates(grid, train_data.n_features + 1, base, activation)
    tasks = [(c, train_data, validation_data, weights) for c in cands]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_candidate, tasks))
    else:
        results = [_run_candidate(t) for t in tasks]

    ref = None if selection_lambda is None else replace(base.loss, lam=selection_lambda)
    leaderboard = []
    for cand, res in zip(cands, results):
        row = cand.row()
        row["n_params"] = nn.init(cand.net_config).n_params if res is None else res.model.n_params
        row["stopped_epoch"] = -1 if res is None else res.stopped_epoch
        row["monitor_loss"] = math.inf if res is None else res.best_monitor_loss
        if res is None:
            row["selection_loss"] = math.inf
        elif ref is None:
            row["selection_loss"] = res.best_monitor_loss
        else:
            row["selection_loss"] = monitor_loss(res.model, validation_data, ref)
        leaderboard.append(row)
    ok = [i for i, r in enumerate(results) if r is not None]
    if not ok:
        raise GridExhaustedError("every grid point diverged")
    key = lambda i: (leaderboard[i]["selection_loss"], leaderboard[i]["n_params"], leaderboard[i]["lambda"], i)
    best = min(ok, key=key)
    return GridResult(cands[best], results[best], leaderboard)


def select_from_grid(grid: GridSpec, index: int, input_dim: int, base: TrainConfig,
                     activation: str = "relu") -> Candidate:
    return candidates(grid, input_dim, base, activation)[index]


def fixed_candidate(input_dim: int, hidden: Sequence[int], dropout: float, base: TrainConfig,
                    activation: str = "relu") -> Candidate:
    return Candidate(0, nn.NetworkConfig(input_dim, tuple(hidden), activation, dropout, base.seed), base)
