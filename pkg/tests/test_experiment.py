import csv
import json

import numpy as np
import pytest

from ipwsurv.errors import ConfigError
from ipwsurv.experiment import (ExperimentConfig, Scenario, load_config, study_scenarios, run_experiment,
                                summarize)
from ipwsurv.training import GridSpec, TrainConfig

TINY_TRAIN = TrainConfig(max_epochs=30, patience=10)


def tiny(**kw):
    base = dict(scenarios=(Scenario("mild", False, 0.3),), replicates=2, n=120, grid=None,
                fixed={"hidden_layers": 1, "nodes": 8, "learning_rate": 0.01, "dropout": 0.1, "lambda": 1.0},
                train=TINY_TRAIN)
    base.update(kw)
    return ExperimentConfig(**base)


def test_one_replicate_one_row_per_arm():
    rep = run_experiment(tiny(replicates=1))
    assert [(r["scenario"], r["arm"]) for r in rep.rows] == [("mild-c30", "weighted"), ("mild-c30", "unweighted")]


def test_rows_and_summary_consistent():
    rep = run_experiment(tiny(replicates=3))
    summary = rep.summary()["mild-c30"]
    for arm in ("weighted", "unweighted"):
        vals = np.array([r["mse"] for r in rep.rows if r["arm"] == arm])
        assert summary["arms"][arm]["mse"]["n"] == 3
        assert abs(summary["arms"][arm]["mse"]["mean"] - vals.mean()) <= 1e-12
        assert abs(summary["arms"][arm]["mse"]["sd"] - vals.std(ddof=1)) <= 1e-12


def test_report_recomputable_from_csv(tmp_path):
    rep = run_experiment(tiny())
    out = rep.write(tmp_path / "r", plot_data=True)
    rows = list(csv.DictReader((out / "replicates.csv").open()))
    payload = json.loads((out / "summary.json").read_text())
    for arm in ("weighted", "unweighted"):
        vals = np.array([float(r["c_index"]) for r in rows if r["arm"] == arm])
        assert abs(payload["summary"]["mild-c30"]["arms"][arm]["c_index"]["mean"] - vals.mean()) <= 1e-12
    long = list(csv.DictReader((out / "plot_data.csv").open()))
    assert len(long) == 2 * len(rows)


def test_deterministic_and_job_independent():
    cfg = tiny(scenarios=(Scenario("severe", False, 0.0), Scenario("balanced", True, 0.5)))
    a = run_experiment(cfg).rows_csv()
    b = run_experiment(cfg, jobs=2).rows_csv()
    assert a == b


def test_tuning_path_and_retune():
    grid = GridSpec((1,), (4,), (0.01,), (0.1, 0.2), (1.0,))
    rep = run_experiment(tiny(grid=grid, replicates=1))
    assert set(rep.chosen["mild-c30"]) == {"weighted", "unweighted"}
    rep2 = run_experiment(tiny(grid=grid, replicates=1, retune_each_replicate=True))
    assert rep2.chosen == {}
    assert len(rep2.rows) == 2


def test_config_round_trip(tmp_path):
    cfg = tiny(grid=GridSpec((1,), (4,), (0.01,), (0.1,), (1.0,)))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


def test_presets_and_validation():
    cfg = load_config("full_grid")
    assert cfg.replicates == 50 and len(cfg.grid) == 480
    assert len(study_scenarios()) == 24
    with pytest.raises(ConfigError):
        tiny(scenarios=())
    with pytest.raises(ConfigError):
        tiny(replicates=0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"ipwsurv_config": 7, "scenarios": []})


def test_monitor_test_drops_validation():
    assert tiny(monitor_test=True).validation_fraction == 0.0
    rep = run_experiment(tiny(monitor_test=True, replicates=1))
    assert len(rep.rows) == 2


def test_summarize_contrast():
    rows = [{"scenario": "s", "arm": a, "mse": m, "c_index": c}
            for a, m, c in [("weighted", 1.0, 0.7), ("weighted", 2.0, 0.8),
                            ("unweighted", 2.0, 0.6), ("unweighted", 4.0, 0.6)]]
    s = summarize(rows)["s"]["contrast"]
    assert s["mse"]["weighted_minus_unweighted"] == pytest.approx(-1.5)
    assert s["mse"]["pooled_se"] == pytest.approx(np.sqrt((0.5 + 2.0) / 2))
