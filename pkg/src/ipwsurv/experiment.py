"""Replicated simulation experiment: weighted vs. unweighted networks across imbalance scenarios."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import network as nn
from .dataset import SplitSpec, split_indices, standardize
from .errors import ConfigError, IpwSurvError
from .metrics import evaluate
from .propensity import compute_weights, fit_logistic
from .seeds import derive_seed
from .simulation import SCENARIOS, SimulationConfig, simulate
from .training import Candidate, GridSpec, TrainConfig, grid_search, train

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
ARMS = ("weighted", "unweighted")
ROW_FIELDS = ("scenario", "imbalance", "collider", "censoring", "replicate", "arm", "seed",
              "hidden_layers", "nodes", "learning_rate", "dropout", "lambda", "stopped_epoch",
              "censored_fraction", "mse", "c_index", "mse_events_only")


@dataclass(frozen=True)
class Scenario:
    imbalance: str
    collider: bool = False
    censoring: float = 0.0

    def __post_init__(self):
        if self.imbalance not in SCENARIOS:
            raise ConfigError(f"unknown imbalance level {self.imbalance!r}")
        if self.censoring not in (0.0, 0.3, 0.5):
            log.warning("censoring target %s is outside the reference set {0, 0.3, 0.5}", self.censoring)

    @property
    def key(self) -> str:
        return f"{self.imbalance}{'-collider' if self.collider else ''}-c{round(self.censoring * 100):02d}"


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple[Scenario, ...]
    replicates: int = 50
    n: int = 1000
    arms: tuple[str, ...] = ARMS
    seed: int = 0
    retune_each_replicate: bool = False
    train_fraction: float = 0.7
    validation_fraction: float = 0.2
    monitor_test: bool = False
    standardize: bool = True
    clip: tuple[float, float] = (0.01, 0.99)
    stabilized: bool = False
    activation: str = "relu"
    grid: GridSpec | None = field(default_factory=GridSpec)
    # used when grid is None
    fixed: dict = field(default_factory=lambda: {"hidden_layers": 1, "nodes": 64, "learning_rate": 0.01,
                                                 "dropout": 0.1, "lambda": 1.0})
    train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=1000, patience=50))
    collider_deterministic: bool = False
    independent_u: bool = False

    def __post_init__(self):
        scen = tuple(s if isinstance(s, Scenario) else Scenario(**s) for s in self.scenarios)
        object.__setattr__(self, "scenarios", scen)
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "clip", tuple(self.clip))
        if isinstance(self.grid, dict):
            object.__setattr__(self, "grid", GridSpec(**self.grid))
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", TrainConfig(**self.train))
        if not scen:
            raise ConfigError("scenario list is empty")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not set(self.arms) <= set(ARMS) or not self.arms:
            raise ConfigError(f"arms must be a non-empty subset of {ARMS}")
        if self.monitor_test and self.validation_fraction:
            object.__setattr__(self, "validation_fraction", 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = [asdict(s) for s in self.scenarios]
        return {"ipwsurv_config": CONFIG_VERSION, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("ipwsurv_config", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r}")
        return cls(**d)


def study_scenarios() -> list[Scenario]:
    """All imbalance x censoring cells without a collider, plus the collider cells shown for it."""
    out = [Scenario(lvl, False, c) for lvl in SCENARIOS for c in (0.0, 0.3, 0.5)]
    out += [Scenario(lvl, True, c) for lvl in ("moderate", "severe", "extreme") for c in (0.0, 0.3, 0.5)]
    return out


DESK_GRID = GridSpec(hidden_layer_counts=(1, 2), nodes_per_layer=(32, 64), learning_rates=(0.01,),
                     dropout_rates=(0.1, 0.2), lambdas=(0.1, 1.0, 10.0))

PRESETS = {
    "full_grid": lambda: ExperimentConfig(scenarios=tuple(study_scenarios())),
    "desk": lambda: ExperimentConfig(scenarios=tuple(study_scenarios()), grid=DESK_GRID),
}


def load_config(spec: str | Path) -> ExperimentConfig:
    if str(spec) in PRESETS:
        return PRESETS[str(spec)]()
    return ExperimentConfig.from_dict(json.loads(Path(spec).read_text()))


@dataclass
class Prepared:
    train: object
    monitor: object
    test: object
    true_test: np.ndarray
    weights: np.ndarray


def prepare(config: ExperimentConfig, scenario: Scenario, replicate: int) -> tuple[Prepared, int]:
    """Simulate, split, standardize and weight one replicate."""
    seed = derive_seed(config.seed, scenario.key, "replicate", replicate)
    cohort = simulate(SimulationConfig(
        n=config.n, beta=SCENARIOS[scenario.imbalance], collider=scenario.collider,
        censoring_target=scenario.censoring, seed=seed,
        collider_deterministic=config.collider_deterministic, independent_u=config.independent_u))
    idx = split_indices(config.n, SplitSpec(config.train_fraction, config.validation_fraction,
                                            derive_seed(seed, "split")))
    data = cohort.dataset
    tr, va, te = data.subset(idx.train), data.subset(idx.validation), data.subset(idx.test)
    if config.standardize:
        tr = standardize(tr)
        va = standardize(va, tr.standardization) if len(va) else va
        te = standardize(te, tr.standardization)
    monitor = te if config.monitor_test else va
    fit = fit_logistic(tr, clip=config.clip)
    w = compute_weights(fit, tr.treatment, "ATE", stabilized=config.stabilized).weights
    return Prepared(tr, monitor, te, cohort.true_times[idx.test], w), seed


def _candidate_from_fixed(config: ExperimentConfig, input_dim: int, seed: int) -> Candidate:
    f = config.fixed
    net_cfg = nn.NetworkConfig(input_dim, (int(f["nodes"]),) * int(f["hidden_layers"]), config.activation,
                               float(f["dropout"]), seed)
    tr_cfg = replace(config.train, learning_rate=float(f["learning_rate"]),
                     loss=replace(config.train.loss, lam=float(f["lambda"])), seed=seed)
    return Candidate(0, net_cfg, tr_cfg)


def tune(config: ExperimentConfig, scenario: Scenario, arm: str, replicate: int = 0) -> Candidate:
    """Pick hyperparameters for one arm on one replicate's train/validation data."""
    prep, seed = prepare(config, scenario, replicate)
    if config.grid is None:
        return _candidate_from_fixed(config, prep.train.n_features + 1, seed)
    base = replace(config.train, seed=derive_seed(seed, "tune"),
                   weight_scheme="ATE" if arm == "weighted" else "none")
    weights = prep.weights if arm == "weighted" else None
    return grid_search(prep.train, prep.monitor, config.grid, base, weights,
                       activation=config.activation).best


def _hyper(c: Candidate) -> dict:
    return {"hidden_layers": len(c.net_config.hidden_sizes), "nodes": c.net_config.hidden_sizes[0],
            "learning_rate": c.train_config.learning_rate, "dropout": c.net_config.dropout_rates[0],
            "lambda": c.train_config.loss.lam}


def run_replicate(config: ExperimentConfig, scenario: Scenario, replicate: int,
                  chosen: dict[str, Candidate] | None) -> list[dict]:
    """Train every arm on one replicate and score it on the test split.

    Both arms share the network initialization and dropout seed so that the
    weights are the only difference between them.
    """
    try:
        prep, seed = prepare(config, scenario, replicate)
        rows = []
        for arm in config.arms:
            cand = chosen[arm] if chosen else tune(config, scenario, arm, replicate)
            init_seed = derive_seed(seed, "init")
            net_cfg = replace(cand.net_config, seed=init_seed)
            tr_cfg = replace(cand.train_config, seed=init_seed,
                             weight_scheme="ATE" if arm == "weighted" else "none")
            weights = prep.weights if arm == "weighted" else None
            fit = train(prep.train, prep.monitor, net_cfg, tr_cfg, weights)
            pred = nn.predict(fit.model, prep.test.design_matrix())
            rep = evaluate(prep.test.time, prep.test.event, pred, prep.true_test)
            rows.append({
                "scenario": scenario.key, "imbalance": scenario.imbalance, "collider": int(scenario.collider),
                "censoring": scenario.censoring, "replicate": replicate, "arm": arm, "seed": seed,
                **_hyper(cand), "stopped_epoch": fit.stopped_epoch,
                "censored_fraction": float(1 - prep.test.event.mean()),
                "mse": rep.mse, "c_index": rep.c_index, "mse_events_only": rep.mse_events_only,
            })
        return rows
    except IpwSurvError as exc:
        raise IpwSurvError(f"scenario {scenario.key}, replicate {replicate}: {exc}") from exc


def _run_task(args):
    return run_replicate(*args)


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _tune_task(args):
    return tune(*args)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[dict]
    chosen: dict[str, dict[str, dict]]

    def summary(self) -> dict:
        return summarize(self.rows, self.config)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in ROW_FIELDS})
        return buf.getvalue()

    def plot_data_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "imbalance", "collider", "censoring", "arm", "replicate", "metric", "value"])
        for r in self.rows:
            for metric in ("mse", "c_index"):
                w.writerow([r["scenario"], r["imbalance"], r["collider"], _fmt(r["censoring"]), r["arm"],
                            r["replicate"], metric, _fmt(r[metric])])
        return buf.getvalue()

    def write(self, out_dir: str | Path, plot_data: bool = False) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "replicates.csv").write_text(self.rows_csv())
        payload = {
            "ipwsurv_report": CONFIG_VERSION,
            "config": self.config.to_dict(),
            "chosen_hyperparameters": self.chosen,
            "summary": self.summary(),
            "metadata": {"package_version": __version__, "numpy_version": np.__version__,
                         "python_version": platform.python_version()},
        }
        (out / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if plot_data:
            (out / "plot_data.csv").write_text(self.plot_data_csv())
        return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _stats(values: Sequence[float]) -> dict:
    a = np.asarray(values, dtype=float)
    sd = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return {"n": len(a), "mean": float(a.mean()), "sd": sd}


def summarize(rows: list[dict], config: ExperimentConfig | None = None) -> dict:
    """Per-scenario, per-arm mean/sd of each metric plus weighted-minus-unweighted contrasts.

    ``pooled_se`` is ``sqrt((sd_w^2 + sd_u^2) / R)``, the standard error of the
    difference of two independent arm means over ``R`` replicates.
    """
    out: dict[str, dict] = {}
    keys = sorted({r["scenario"] for r in rows}, key=[r["scenario"] for r in rows].index)
    for key in keys:
        group = [r for r in rows if r["scenario"] == key]
        entry: dict = {"arms": {}}
        for arm in sorted({r["arm"] for r in group}):
            g = [r for r in group if r["arm"] == arm]
            entry["arms"][arm] = {m: _stats([r[m] for r in g]) for m in ("mse", "c_index")}
        if {"weighted", "unweighted"} <= set(entry["arms"]):
            entry["contrast"] = {}
            for m in ("mse", "c_index"):
                sw, su = entry["arms"]["weighted"][m], entry["arms"]["unweighted"][m]
                reps = min(sw["n"], su["n"])
                pooled = math.sqrt((sw["sd"] ** 2 + su["sd"] ** 2) / reps)
                diff = sw["mean"] - su["mean"]
                entry["contrast"][m] = {"weighted_minus_unweighted": diff, "pooled_se": pooled,
                                        "z": diff / pooled if pooled > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))}
        out[key] = entry
    return out


def run_experiment(config: ExperimentConfig, jobs: int = 1, progress=None) -> ExperimentReport:
    """Run every (scenario, replicate) cell; output is independent of ``jobs``."""
    chosen: dict[str, dict[str, Candidate]] = {}
    if not config.retune_each_replicate:
        tune_tasks = [(config, s, arm) for s in config.scenarios for arm in config.arms]
        tuned = _map(_tune_task, tune_tasks, jobs)
        for (_, s, arm), cand in zip(tune_tasks, tuned):
            chosen.setdefault(s.key, {})[arm] = cand
    tasks = [(config, s, r, chosen.get(s.key)) for s in config.scenarios for r in range(config.replicates)]
    rows: list[dict] = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(_run_task, tasks)):
                rows += res
                if progress:
                    progress(i + 1, len(tasks))
    else:
        for i, t in enumerate(tasks):
            rows += _run_task(t)
            if progress:
                progress(i + 1, len(tasks))
    chosen_rows = {k: {arm: _hyper(c) for arm, c in v.items()} for k, v in chosen.items()}
    return ExperimentReport(config, rows, chosen_rows)
