import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ipwsurv import network as nn
from ipwsurv.cli import build_parser, main


@pytest.fixture
def cohort(tmp_path):
    out = tmp_path / "cohort.csv"
    assert main(["simulate", "--n", "200", "--imbalance", "moderate", "--censoring", "0.3",
                 "--seed", "3", "--out", str(out)]) == 0
    return out


def run(args):
    return main([str(a) for a in args])


def test_simulate_writes_truth(cohort):
    truth = cohort.with_name("cohort.truth.csv")
    rows = list(csv.DictReader(truth.open()))
    obs = list(csv.DictReader(cohort.open()))
    assert len(rows) == len(obs) == 200
    for o, t in zip(obs, rows):
        assert float(o["time"]) <= float(t["true_time"])


def test_weights(cohort, tmp_path, capsys):
    assert run(["weights", "--data", cohort, "--scheme", "ATT"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "index,score,weight" and len(lines) == 201
    treated = [r["treatment"] for r in csv.DictReader(cohort.open())]
    for row, z in zip(lines[1:], treated):
        if z == "1":
            assert float(row.split(",")[2]) == 1.0


def test_train_evaluate_predict_ate(cohort, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert run(["train", "--data", cohort, "--out", model, "--hidden", "8", "--max-epochs", "50"]) == 0
    net, meta = nn.load(model)
    assert meta["feature_names"] == ["x1", "x2", "x3"] and meta["standardization"]
    assert run(["evaluate", "--data", cohort, "--model", model]) == 0
    report = json.loads(capsys.readouterr().out)
    assert 0 <= report["c_index"] <= 1
    preds = tmp_path / "p.csv"
    assert run(["predict", "--model", model, "--data", cohort, "--samples", "20", "--out", preds]) == 0
    rows = list(csv.DictReader(preds.open()))
    assert len(rows) == 200
    assert all(float(r["lower"]) <= float(r["upper"]) for r in rows)
    assert run(["ate", "--model", model, "--data", cohort]) == 0
    est = json.loads(capsys.readouterr().out)
    assert est["events_only"] is True


def test_evaluate_perfect_predictions(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x1,treatment,time,event\n0.1,0,1.5,1\n0.2,1,2.5,1\n0.3,0,4.0,1\n")
    preds = tmp_path / "p.csv"
    preds.write_text("log_prediction\n" + "\n".join(repr(float(np.log(t))) for t in (1.5, 2.5, 4.0)) + "\n")
    assert run(["evaluate", "--data", data, "--predictions", preds]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mse"] == 0.0 and report["c_index"] == 1.0


def test_train_missing_event_column(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x1,treatment,time\n0.1,0,1.5\n0.2,1,2.5\n")
    assert run(["train", "--data", data]) == 1
    assert "event" in capsys.readouterr().err


def test_unknown_flag_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--no-such-flag"])
    assert exc.value.code == 2


def test_help_lists_every_subcommand():
    text = build_parser().format_help()
    for cmd in ("simulate", "weights", "tune", "train", "evaluate", "predict", "ate", "experiment"):
        assert cmd in text


@pytest.mark.parametrize("cmd", ["simulate", "weights", "tune", "train", "evaluate", "predict", "ate",
                                 "experiment"])
def test_common_flags(cmd):
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    flags = {o for a in sub._actions for o in a.option_strings}
    assert {"--seed", "--config", "--out", "--help"} <= flags


def test_config_file_defaults(cohort, tmp_path):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"ipwsurv_config": 1, "hidden": [4], "max_epochs": 5, "lam": 0.1}))
    model = tmp_path / "m.json"
    assert run(["train", "--data", cohort, "--config", cfg, "--out", model]) == 0
    net, meta = nn.load(model)
    assert net.config.hidden_sizes == (4,)
    assert meta["training"]["lambda"] == 0.1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"ipwsurv_config": 1, "bogus": 1}))
    with pytest.raises(SystemExit) as exc:
        run(["train", "--data", cohort, "--config", bad])
    assert exc.value.code == 2


def test_tune_small_grid(cohort, tmp_path):
    out = tmp_path / "lb.csv"
    assert run(["tune", "--data", cohort, "--out", out, "--layers", "1", "--nodes", "4,8", "--lrs", "0.01",
                "--dropouts", "0.1", "--lambdas", "0,1", "--max-epochs", "20"]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert (tmp_path / "lb.model.json").exists()


def test_experiment_byte_identical(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "ipwsurv_config": 1, "scenarios": [{"imbalance": "severe", "collider": False, "censoring": 0.3}],
        "replicates": 2, "n": 150, "grid": None, "train": {"max_epochs": 20, "patience": 5},
        "fixed": {"hidden_layers": 1, "nodes": 8, "learning_rate": 0.01, "dropout": 0.1, "lambda": 1.0}}))
    for d in ("a", "b"):
        assert run(["experiment", "--config", cfg, "--seed", "5", "--out", tmp_path / d, "--emit-plot-data"]) == 0
    a = (tmp_path / "a" / "replicates.csv").read_bytes()
    assert a == (tmp_path / "b" / "replicates.csv").read_bytes()
    assert (tmp_path / "a" / "plot_data.csv").exists()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["config"]["seed"] == 5


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ipwsurv.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "experiment" in proc.stdout


def test_evaluate_against_truth_file(cohort, tmp_path, capsys):
    truth = cohort.with_name("cohort.truth.csv")
    true_log = np.log([float(r["true_time"]) for r in csv.DictReader(truth.open())])
    preds = tmp_path / "p.csv"
    preds.write_text("log_prediction\n" + "\n".join(repr(float(v)) for v in true_log) + "\n")
    assert run(["evaluate", "--data", cohort, "--predictions", preds, "--truth", truth]) == 0
    assert json.loads(capsys.readouterr().out)["mse"] == 0.0
    assert run(["evaluate", "--data", cohort, "--predictions", preds, "--true-time-col", "true_time"]) == 1
    assert "no column 'true_time'" in capsys.readouterr().err
