import csv
import io
import json

import pytest

from tinyodl.cli import _check_simulation, main
from tinyodl.dataset import fixture_path
from tinyodl.experiment import ExperimentConfig, ExperimentReport, TrialReport


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_cost_model_stdout(capsys):
    assert main(["cost-model"]) == 0
    out = capsys.readouterr().out
    assert "odlhash,128,136.39,136388,33536" in out
    assert "1,0.00,predicting,0.123396,0.000000,1.281588,1.404984" in out


def test_cost_model_files(tmp_path):
    assert main(["cost-model", "--hidden", "128", "--out", str(tmp_path)]) == 0
    rows = _csv((tmp_path / "memory.csv").read_text())
    assert rows[0] == ["variant", "n_hidden", "memory_kB", "memory_bytes", "parameters"]
    assert len(rows) == 4
    assert (tmp_path / "power.csv").exists()


def test_simulate_on_generated_data(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["simulate", "--synthetic", "1500", "--n-hidden", "32", "--theta", "auto",
                 "--trials", "2", "--warmup", "40", "--out", str(out),
                 "--plot-data", str(tmp_path / "plots")])
    assert code == 0
    rows = _csv(out.read_text())
    assert [r[3] for r in rows[1:]] == ["0", "1", "mean", "std"]
    assert (tmp_path / "plots" / "theta_trace.csv").exists()
    assert "odlhash N=32 theta=auto" in capsys.readouterr().err


def test_config_file_mirrors_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"approach": "noodl", "n-hidden": 32, "trials": 1,
                               "synthetic": 1000, "out": str(tmp_path / "r.csv")}))
    assert main(["simulate", "--config", str(cfg)]) == 0
    rows = _csv((tmp_path / "r.csv").read_text())
    assert rows[1][:3] == ["noodl", "32", "1"]


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"hidden_units": 5}))
    with pytest.raises(SystemExit):
        main(["simulate", "--config", str(cfg), "--synthetic", "500"])


def test_sweep_check_and_plot_data(tmp_path):
    code = main(["sweep-theta", "--synthetic", "1500", "--n-hidden", "32", "--trials", "1",
                 "--warmup", "40", "--thetas", "0.08,1", "--check",
                 "--out", str(tmp_path / "s.csv"), "--plot-data", str(tmp_path)])
    assert code == 0
    rows = _csv((tmp_path / "theta_sweep.csv").read_text())
    assert [r[0] for r in rows[1:]] == ["0.08", "1"]


def _report(approach, theta, before, after, volume=100.0, baseline=None):
    cfg = ExperimentConfig(approach=approach, n_hidden=128, theta=theta, trials=1)
    t = TrialReport(approach, 128, str(theta), 0, 0, before, after,
                    after if baseline is None else baseline, volume)
    return ExperimentReport(cfg, [t])


def test_check_mode_exit_codes(capsys):
    assert _check_simulation(_report("noodl", 1.0, 0.929, 0.829)) == 0
    assert _check_simulation(_report("noodl", 1.0, 0.929, 0.90)) == 1
    assert _check_simulation(_report("odlhash", 1.0, 0.931, 0.85)) == 1
    assert _check_simulation(_report("odlhash", "auto", 0.93, 0.90, 44.3, 0.909)) == 0
    assert _check_simulation(_report("odlhash", "auto", 0.93, 0.90, 90.0, 0.909)) == 1
    assert "CHECK FAILED" in capsys.readouterr().err


def test_split_dataset_fixture(capsys, tmp_path):
    assert main(["split-dataset", "--data", str(fixture_path()), "--allow-partial",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("samples") == 3
    assert (tmp_path / "test1" / "X_test1.txt").exists()


def test_public_counts_required_without_flag():
    with pytest.raises(Exception, match="expected 7352"):
        main(["split-dataset", "--data", str(fixture_path())])


def test_missing_dataset_message(monkeypatch):
    monkeypatch.delenv("ODL_HAR_ROOT", raising=False)
    with pytest.raises(SystemExit, match="no dataset"):
        main(["simulate", "--trials", "1"])


def test_make_fixture(tmp_path, capsys):
    assert main(["make-fixture", "--samples", "30", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "train" / "X_train.txt").exists()


def test_check_without_dataset(monkeypatch, capsys):
    monkeypatch.delenv("ODL_HAR_ROOT", raising=False)
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 7 and out.count("[SKIP]") == 4
