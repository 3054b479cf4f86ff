import json

import numpy as np
import pytest

from tlshield import data
from tlshield.cli import main
from tlshield.report import read_metrics, rolling_mean


def test_check_clean_fixture(capsys):
    code = main(["check", "surveillance3", "--ltl", "G F green & G F (yellow & !green)",
                 "--prefix", "2", "--cycle", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "agree" in out


def test_check_structure_only(capsys):
    assert main(["check", str(data.fixture_path("seq2_safe.aut"))]) == 0
    assert "unsafe" in capsys.readouterr().out


def test_check_broken_totality(tmp_path, capsys):
    bad = tmp_path / "bad.aut"
    bad.write_text(
        """
        aps: a
        states: q0
        initial: q0
        deterministic: q0
        accepting: F1 = q0
        trans: q0 -> q0 : a
        """
    )
    assert main(["check", str(bad)]) == 2
    assert "totality" in capsys.readouterr().err


def test_check_wrong_accepting_set_counterexample(tmp_path, capsys):
    mutated = tmp_path / "mutated.aut"
    mutated.write_text(
        data.fixture_path("surveillance3.aut").read_text().replace("F2 = q2", "F2 = q0")
    )
    code = main(
        ["check", str(mutated), "--ltl", "G F green & G F (yellow & !green)",
         "--prefix", "2", "--cycle", "3"]
    )
    assert code == 3
    out = capsys.readouterr().out
    assert "counterexample" in out and "cycle=" in out


def test_check_missing_file(capsys):
    assert main(["check", "does_not_exist.aut"]) == 2


def test_train_eval_cycle(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = data.fixture_path("pendulum_surveillance_smoke.toml")
    code = main(["train", str(cfg), "--out", "run", "--episodes", "2"])
    assert code == 0
    out = capsys.readouterr().out
    assert "checkpoint" in out
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert (tmp_path / "run" / "config.echo").read_text() == cfg.read_text()

    code = main(["eval", "run/ckpt.bin", str(cfg), "--runs", "3"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) >= {"success_rate", "safety_rate", "mean_return", "success_ci"}
    assert summary["n_runs"] == 3


def test_train_determinism_byte_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = data.fixture_path("pendulum_surveillance_smoke.toml")
    assert main(["train", str(cfg), "--out", "a", "--episodes", "3"]) == 0
    assert main(["train", str(cfg), "--out", "b", "--episodes", "3"]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (
        tmp_path / "b" / "metrics.csv"
    ).read_bytes()


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = data.fixture_path("pendulum_surveillance_smoke.toml")
    monkeypatch.setenv("TLSHIELD_SEED", "123")
    assert main(["train", str(cfg), "--out", "a", "--episodes", "2"]) == 0
    monkeypatch.setenv("TLSHIELD_SEED", "124")
    assert main(["train", str(cfg), "--out", "b", "--episodes", "2"]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (
        tmp_path / "b" / "metrics.csv"
    ).read_bytes()


def test_eval_zero_runs_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["eval", "x.bin", "cfg.toml", "--runs", "0"])
    assert exc.value.code == 2


def test_oracle_packaged_fixtures(capsys):
    assert main(["oracle"]) == 0
    out = capsys.readouterr().out
    assert "optimal_probability" in out and "FAIL" not in out


def test_report_outputs(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = data.fixture_path("pendulum_surveillance_smoke.toml")
    assert main(["train", str(cfg), "--out", "run", "--episodes", "5"]) == 0
    capsys.readouterr()
    assert main(["report", "run/metrics.csv", "--window", "3"]) == 0
    out_dir = tmp_path / "run" / "report"
    for name in ("rolling.csv", "deciles.csv", "reward_curve.png", "interventions.png", "safety.png"):
        assert (out_dir / name).exists(), name

    metrics = read_metrics(tmp_path / "run" / "metrics.csv")
    rolled = read_metrics(out_dir / "rolling.csv")
    again = rolling_mean(metrics["return"], 3)
    assert np.allclose(rolled["return_rolling"], again)


def test_report_missing_file(capsys):
    assert main(["report", "nope.csv"]) == 2
