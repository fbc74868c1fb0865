"""Command-line interface.

Subcommands: simulate, weights, tune, train, evaluate, predict, ate, experiment.
Every subcommand takes ``--seed``, ``--config`` (a JSON file whose keys
supply defaults for that subcommand's flags) and ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import network as nn
from .causal import estimate_ate, mc_dropout_predict, predict_counterfactual
from .dataset import Dataset, Standardization, load_csv, standardize, write_csv
from .errors import ConfigError, IpwSurvError
from .experiment import CONFIG_VERSION, PRESETS, ExperimentConfig, load_config, run_experiment
from .loss import LossConfig
from .metrics import evaluate
from .propensity import compute_weights, fit_logistic
from .simulation import SCENARIOS, SimulationConfig, simulate
from .training import GridSpec, TrainConfig, grid_search, train

log = logging.getLogger("ipwsurv")

JOBS_ENV = "IPWSURV_JOBS"


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    p.add_argument("--config", metavar="FILE",
                   help="JSON file of flag defaults; top-level key 'ipwsurv_config' must be 1")
    p.add_argument("--out", metavar="PATH", help=out_help)


def _data_args(p: argparse.ArgumentParser, need_outcome: bool = True) -> None:
    p.add_argument("--data", required=True, metavar="CSV", help="input CSV with a header row")
    p.add_argument("--treatment-col", default="treatment", help="treatment column name (default: treatment)")
    if need_outcome:
        p.add_argument("--time-col", default="time", help="time column name (default: time)")
        p.add_argument("--event-col", default="event", help="event column name (default: event)")
    p.add_argument("--features", type=lambda s: [f.strip() for f in s.split(",") if f.strip()],
                   help="comma-separated feature columns (default: every non-outcome column)")


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=("ATE", "ATT", "none"), default="ATE", help="loss weights (default ATE)")
    p.add_argument("--clip", type=_floats, default=(0.01, 0.99), metavar="LO,HI",
                   help="propensity clipping bounds (default 0.01,0.99)")
    p.add_argument("--stabilized", action="store_true", help="multiply weights by marginal arm probabilities")
    p.add_argument("--no-standardize", dest="standardize", action="store_false",
                   help="use covariates as-is instead of standardizing on the fitting data")
    p.add_argument("--validation-fraction", type=float, default=0.2,
                   help="share of the input held out for early stopping (default 0.2)")
    p.add_argument("--monitor-data", metavar="CSV",
                   help="early-stop on this file (e.g. the test set) instead of a held-out validation split")
    p.add_argument("--scale", choices=("log_time", "time"), default="log_time",
                   help="scale on which loss residuals are formed (default log_time)")
    p.add_argument("--max-epochs", type=int, default=500, help="epoch cap (default 500)")
    p.add_argument("--patience", type=int, default=10, help="early-stopping patience in epochs (default 10)")
    p.add_argument("--min-delta", type=float, default=1e-4, help="minimum monitor-loss improvement (default 1e-4)")
    p.add_argument("--batch-size", type=int, default=None, help="minibatch size (default full batch)")
    p.add_argument("--activation", choices=("relu", "tanh", "sigmoid"), default="relu",
                   help="hidden activation (default relu)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipwsurv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a synthetic cohort CSV plus a truth side file")
    _common(p, "cohort CSV path (default cohort.csv); truth goes to <stem>.truth.csv")
    p.add_argument("--n", type=int, default=1000, help="number of subjects (default 1000)")
    p.add_argument("--imbalance", choices=list(SCENARIOS), default="mild", help="treatment-assignment scenario")
    p.add_argument("--beta", type=_floats, metavar="B1,B2,B3", help="explicit assignment coefficients")
    p.add_argument("--collider", action="store_true", help="make x2 a collider of x1 and x3")
    p.add_argument("--collider-deterministic", action="store_true",
                   help="collider without noise: x2 = 5 x1 + 5 x3 exactly")
    p.add_argument("--independent-u", action="store_true", help="separate uniform draws for each arm's time")
    p.add_argument("--censoring", type=float, default=0.0, help="target censoring proportion (default 0)")

    p = sub.add_parser("weights", help="fit the propensity model and write per-record weights")
    _common(p, "weights CSV path (default: stdout)")
    _data_args(p, need_outcome=False)
    p.add_argument("--scheme", choices=("ATE", "ATT"), default="ATE", help="weight formula (default ATE)")
    p.add_argument("--clip", type=_floats, default=(0.01, 0.99), metavar="LO,HI",
                   help="propensity clipping bounds (default 0.01,0.99)")
    p.add_argument("--stabilized", action="store_true", help="multiply weights by marginal arm probabilities")
    p.add_argument("--max-iter", type=int, default=100, help="Newton iteration cap (default 100)")
    p.add_argument("--tolerance", type=float, default=1e-8,
                   help="stop when no coefficient moves more than this (default 1e-8)")

    p = sub.add_parser("train", help="train one network and write the model file")
    _common(p, "model file path (default model.json)")
    _data_args(p)
    _model_args(p)
    p.add_argument("--hidden", type=_ints, default=(32,), metavar="N1,N2,..", help="hidden layer sizes")
    p.add_argument("--dropout", type=float, default=0.1, help="dropout rate for every hidden layer")
    p.add_argument("--lr", type=float, default=0.01, help="Adam learning rate")
    p.add_argument("--lam", type=float, default=1.0, help="censoring penalty lambda")

    p = sub.add_parser("tune", help="grid-search hyperparameters; write leaderboard and best model")
    _common(p, "leaderboard CSV path (default leaderboard.csv); best model at <stem>.model.json")
    _data_args(p)
    _model_args(p)
    p.add_argument("--layers", type=_ints, default=(1, 2, 3), help="hidden layer counts (default 1,2,3)")
    p.add_argument("--nodes", type=_ints, default=(32, 64, 128, 256),
                   help="nodes per hidden layer (default 32,64,128,256)")
    p.add_argument("--lrs", type=_floats, default=(0.01, 0.001), help="learning rates (default 0.01,0.001)")
    p.add_argument("--dropouts", type=_floats, default=(0.1, 0.2, 0.3, 0.4),
                   help="dropout rates (default 0.1,0.2,0.3,0.4)")
    p.add_argument("--lambdas", type=_floats, default=(0.0, 0.01, 0.1, 1.0, 10.0),
                   help="censoring penalties (default 0,0.01,0.1,1,10)")
    p.add_argument("--selection-lambda", type=float, default=1.0,
                   help="common lambda for ranking candidates (negative: rank on each candidate's own loss)")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (env {JOBS_ENV}, default 1)")

    p = sub.add_parser("evaluate", help="C-index and MSE of a model or a predictions file")
    _common(p, "report JSON path (default: stdout)")
    _data_args(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model file from train/tune")
    src.add_argument("--predictions", help="CSV with a log_prediction column aligned to --data rows")
    p.add_argument("--true-time-col", help="column of uncensored true times to use as MSE target "
                   "(default true_time when --truth is given)")
    p.add_argument("--truth", metavar="CSV", help="file holding the true-time column, e.g. the "
                   "<stem>.truth.csv written by simulate (default: --data)")

    p = sub.add_parser("predict", help="MC-dropout prediction intervals and counterfactual times")
    _common(p, "predictions CSV path (default: stdout)")
    p.add_argument("--model", required=True, help="model file from train/tune")
    p.add_argument("--data", required=True, metavar="CSV", help="covariate CSV (model's feature columns)")
    p.add_argument("--treatment-col", default="treatment",
                   help="treatment column, used when --arm is absent (default: treatment)")
    p.add_argument("--arm", type=int, choices=(0, 1), help="predict everyone under this arm")
    p.add_argument("--samples", type=int, default=100, help="MC dropout passes (default 100)")
    p.add_argument("--level", type=float, default=0.95, help="interval level (default 0.95)")
    p.add_argument("--interval", choices=("percentile", "normal"), default="percentile",
                   help="log-scale percentiles, or mean +/- z sd (default percentile)")

    p = sub.add_parser("ate", help="plug-in and doubly robust average treatment effect")
    _common(p, "estimate JSON path (default: stdout)")
    _data_args(p)
    p.add_argument("--model", required=True, help="model file from train/tune")
    p.add_argument("--clip", type=_floats, default=(0.01, 0.99), metavar="LO,HI",
                   help="propensity clipping bounds (default 0.01,0.99)")

    p = sub.add_parser("experiment", help="replicated weighted-vs-unweighted simulation study")
    _common(p, "output directory (default experiment_out)")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="built-in configuration (used when --config is absent; default full_grid)")
    p.add_argument("--replicates", type=int, help="override the replicate count")
    p.add_argument("--n", type=int, help="override the cohort size")
    p.add_argument("--retune-each-replicate", action="store_true", default=None,
                   help="grid-search inside every replicate instead of once per scenario and arm")
    p.add_argument("--monitor-test", action="store_true", default=None,
                   help="early-stop on the test split instead of a validation split")
    p.add_argument("--emit-plot-data", action="store_true", help="also write long-format plot_data.csv")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (env {JOBS_ENV}, default 1)")
    return parser


def _jobs(value) -> int:
    if value is not None:
        return max(1, int(value))
    return max(1, int(os.environ.get(JOBS_ENV, "1")))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args) -> Dataset:
    schema = {"treatment": args.treatment_col, "time": args.time_col, "event": args.event_col}
    return load_csv(args.data, schema, args.features)


def _load_covariates(path: str, features, treatment_col: str, arm: int | None) -> Dataset:
    """Read covariates (and treatment unless ``arm`` is set) without outcome columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise IpwSurvError(f"{path}: no data rows")
    missing = [f for f in features if f not in rows[0]]
    if arm is None and treatment_col not in rows[0]:
        missing.append(treatment_col)
    if missing:
        raise IpwSurvError(f"{path}: missing column(s) {', '.join(missing)}")
    x = np.array([[float(r[f]) for f in features] for r in rows])
    z = np.full(len(rows), arm) if arm is not None else np.array([int(float(r[treatment_col])) for r in rows])
    return Dataset(x, z, np.ones(len(rows)), np.ones(len(rows), dtype=int), tuple(features))


def _loss_cfg(args, lam: float) -> LossConfig:
    return LossConfig(lam, args.scale)


def _train_config(args, lr: float, lam: float) -> TrainConfig:
    return TrainConfig(args.max_epochs, lr, args.patience, args.min_delta, args.scheme, _loss_cfg(args, lam),
                       args.seed, args.batch_size)


def _fit_inputs(args):
    data = _load(args)
    if args.monitor_data:
        fit_part = data
        monitor = load_csv(args.monitor_data, {"treatment": args.treatment_col, "time": args.time_col,
                                               "event": args.event_col}, list(data.feature_names))
    else:
        fit_part, monitor = _holdout(data, args.validation_fraction, args.seed)
    if args.standardize:
        fit_part = standardize(fit_part)
        monitor = standardize(monitor, fit_part.standardization)
    weights = None
    if args.scheme != "none":
        fit = fit_logistic(fit_part, clip=tuple(args.clip))
        weights = compute_weights(fit, fit_part.treatment, args.scheme, stabilized=args.stabilized)
    return fit_part, monitor, weights


def _holdout(data: Dataset, fraction: float, seed: int):
    if not 0 < fraction < 1:
        raise ConfigError("--validation-fraction must be in (0, 1) unless --monitor-data is given")
    perm = np.random.default_rng(seed).permutation(len(data))
    n_val = int(round(len(data) * fraction))
    if n_val < 1 or n_val >= len(data):
        raise ConfigError(f"validation split of {len(data)} records is empty or covers everything")
    return data.subset(np.sort(perm[n_val:])), data.subset(np.sort(perm[:n_val]))


def _model_meta(data: Dataset, args, extra: dict | None = None) -> dict:
    return {
        "feature_names": list(data.feature_names),
        "treatment_index": data.treatment_index,
        "standardization": data.standardization.to_dict() if data.standardization else None,
        "training": {"scheme": args.scheme, "scale": args.scale, "seed": args.seed, **(extra or {})},
    }


def cmd_simulate(args) -> None:
    cfg = SimulationConfig(n=args.n, beta=args.beta or SCENARIOS[args.imbalance], collider=args.collider,
                           censoring_target=args.censoring, seed=args.seed,
                           collider_deterministic=args.collider_deterministic, independent_u=args.independent_u)
    cohort = simulate(cfg)
    out = Path(args.out or "cohort.csv")
    write_csv(cohort.dataset, out)
    truth = out.with_name(out.stem + ".truth.csv")
    with truth.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "true_time", "y0", "y1", "propensity_truth", "censoring_time"])
        for i in range(len(cohort.true_times)):
            w.writerow([i, repr(float(cohort.true_times[i])), repr(float(cohort.y0[i])), repr(float(cohort.y1[i])),
                        repr(float(cohort.propensity_truth[i])), repr(float(cohort.censoring_times[i]))])
    log.info("wrote %s and %s (c_max=%s)", out, truth, cohort.c_max)


def cmd_weights(args) -> None:
    data = _load_weights_data(args)
    fit = fit_logistic(data, max_iter=args.max_iter, tolerance=args.tolerance, clip=tuple(args.clip))
    w = compute_weights(fit, data.treatment, args.scheme, stabilized=args.stabilized)
    lines = ["index,score,weight"] + [f"{i},{float(fit.scores[i])!r},{float(w.weights[i])!r}" for i in range(len(data))]
    _emit("\n".join(lines) + "\n", args.out)


def _load_weights_data(args) -> Dataset:
    # outcome columns are optional here
    with open(args.data, newline="") as fh:
        header = next(csv.reader(fh), [])
    if not header:
        raise IpwSurvError(f"{args.data}: empty file")
    features = args.features or [h for h in header if h not in (args.treatment_col, "time", "event")]
    return _load_covariates(args.data, features, args.treatment_col, None)


def cmd_train(args) -> None:
    fit_part, monitor, weights = _fit_inputs(args)
    net_cfg = nn.NetworkConfig(fit_part.n_features + 1, tuple(args.hidden), args.activation, args.dropout, args.seed)
    result = train(fit_part, monitor, net_cfg, _train_config(args, args.lr, args.lam), weights)
    out = args.out or "model.json"
    nn.save(result.model, out, **_model_meta(fit_part, args, {
        "lambda": args.lam, "learning_rate": args.lr, "stopped_epoch": result.stopped_epoch,
        "best_epoch": result.best_epoch, "best_monitor_loss": result.best_monitor_loss}))
    log.info("stopped at epoch %d (best %d, monitor loss %.6g); wrote %s",
             result.stopped_epoch, result.best_epoch, result.best_monitor_loss, out)


def cmd_tune(args) -> None:
    fit_part, monitor, weights = _fit_inputs(args)
    grid = GridSpec(args.layers, args.nodes, args.lrs, args.dropouts, args.lambdas)
    base = _train_config(args, args.lrs[0], args.lambdas[0])
    sel = None if args.selection_lambda < 0 else args.selection_lambda
    res = grid_search(fit_part, monitor, grid, base, weights, activation=args.activation,
                      jobs=_jobs(args.jobs), selection_lambda=sel)
    out = Path(args.out or "leaderboard.csv")
    fields = list(res.leaderboard[0])
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in res.leaderboard:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    model_path = out.with_name(out.stem + ".model.json")
    best = res.best
    nn.save(res.best_result.model, model_path, **_model_meta(fit_part, args, {
        **best.row(), "stopped_epoch": res.best_result.stopped_epoch}))
    log.info("best grid point %d %s; wrote %s and %s", best.index, best.row(), out, model_path)


def _load_model(path):
    net, meta = nn.load(path)
    std = Standardization.from_dict(meta["standardization"]) if meta.get("standardization") else None
    return net, meta, std


def _apply_std(data: Dataset, std: Standardization | None) -> Dataset:
    return standardize(data, std) if std is not None else data


def cmd_evaluate(args) -> None:
    data = _load(args)
    if args.model:
        net, meta, std = _load_model(args.model)
        data = load_csv(args.data, {"treatment": args.treatment_col, "time": args.time_col,
                                    "event": args.event_col}, meta["feature_names"])
        pred = nn.predict(net, _apply_std(data, std).design_matrix())
    else:
        with open(args.predictions, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "log_prediction" not in rows[0]:
            raise IpwSurvError(f"{args.predictions}: needs a log_prediction column")
        pred = np.array([float(r["log_prediction"]) for r in rows])
        if len(pred) != len(data):
            raise IpwSurvError(f"{len(pred)} predictions for {len(data)} records")
    true_times = None
    column = args.true_time_col or ("true_time" if args.truth else None)
    if column:
        source = args.truth or args.data
        with open(source, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or column not in rows[0]:
            raise IpwSurvError(f"{source}: no column {column!r}")
        true_times = np.array([float(r[column]) for r in rows])
        if len(true_times) != len(data):
            raise IpwSurvError(f"{len(true_times)} true times for {len(data)} records")
    report = evaluate(data.time, data.event, pred, true_times)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)


def cmd_predict(args) -> None:
    net, meta, std = _load_model(args.model)
    data = _apply_std(_load_covariates(args.data, meta["feature_names"], args.treatment_col, args.arm), std)
    summary = mc_dropout_predict(net, data.design_matrix(), args.samples, args.seed, args.level, args.interval)
    lo, hi = summary.interval_time
    t0 = np.exp(predict_counterfactual(net, data, 0))
    t1 = np.exp(predict_counterfactual(net, data, 1))
    lines = ["index,point_time,lower,upper,sd_log,time_arm0,time_arm1"]
    for i in range(len(data)):
        lines.append(",".join([str(i), *(repr(float(v[i])) for v in (summary.point_time, lo, hi, summary.sd_log,
                                                                    t0, t1))]))
    _emit("\n".join(lines) + "\n", args.out)


def cmd_ate(args) -> None:
    net, meta, std = _load_model(args.model)
    data = load_csv(args.data, {"treatment": args.treatment_col, "time": args.time_col,
                                "event": args.event_col}, meta["feature_names"])
    data = _apply_std(data, std)
    fit = fit_logistic(data, clip=tuple(args.clip))
    est = estimate_ate(net, data, fit)
    _emit(json.dumps(est.to_dict(), indent=2) + "\n", args.out)


def cmd_experiment(args) -> None:
    if args.config:
        d = json.loads(Path(args.config).read_text())
        config = ExperimentConfig.from_dict(d)
    else:
        config = load_config(args.preset or "full_grid")
    overrides = {"seed": args.seed if args.seed_given else config.seed}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.n is not None:
        overrides["n"] = args.n
    if args.retune_each_replicate:
        overrides["retune_each_replicate"] = True
    if args.monitor_test:
        overrides["monitor_test"] = True
    config = replace(config, **overrides)

    def progress(done, total):
        log.info("replicate cells: %d/%d", done, total)

    report = run_experiment(config, _jobs(args.jobs), progress)
    out = report.write(args.out or "experiment_out", plot_data=args.emit_plot_data)
    log.info("wrote %s", out)


COMMANDS = {
    "simulate": cmd_simulate, "weights": cmd_weights, "train": cmd_train, "tune": cmd_tune,
    "evaluate": cmd_evaluate, "predict": cmd_predict, "ate": cmd_ate, "experiment": cmd_experiment,
}


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config and args.command != "experiment":
        d = json.loads(Path(args.config).read_text())
        if d.pop("ipwsurv_config", None) != CONFIG_VERSION:
            parser.error(f"{args.config}: top-level 'ipwsurv_config' must be {CONFIG_VERSION}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(d) - known
        if unknown:
            parser.error(f"{args.config}: unknown keys {sorted(unknown)}")
        sub.set_defaults(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
        args = parser.parse_args(argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = _apply_config_file(parser, argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except (IpwSurvError, OSError, ValueError, KeyError) as exc:
        print(f"ipwsurv {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
