from __future__ import annotations

import csv

import pytest

from syncloc.cli import main


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["simulate", "--scenario", "a", "--mode", "two-an", "--seed", "7",
                     "--out", str(tmp_path / name)]) == 0
    for f in ("trajectory.csv", "timestamps.csv", "trace_two_an.csv", "meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert not (tmp_path / "a" / "trace_one_an.csv").exists()
    assert "two_an:" in capsys.readouterr().out


def test_missing_config(tmp_path, capsys):
    path = tmp_path / "absent.toml"
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert str(path) in capsys.readouterr().err


def test_bad_config_value(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text('mode = "three-an"\n')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "three" in capsys.readouterr().err


def test_noise_off_summary(tmp_path, capsys):
    assert main(["simulate", "--scenario", "static", "--noise-off", "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    trace = read(tmp_path / "trace_two_an.csv")
    head = trace[0]
    row = trace[10]  # round 10
    assert float(row[head.index("pos_err_m")]) < 0.01
    assert float(row[head.index("off_err_ns")]) < 0.1
    assert "final position error" in capsys.readouterr().out


def test_simulate_batch_summary(tmp_path):
    assert main(["simulate", "--runs", "2", "--seed", "1", "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "summary.csv")
    assert rows[0][0] == "mode"
    assert [r[0] for r in rows[1:]] == ["one_an", "two_an"]


def test_sweep_writes_figure_csvs(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text("[sweep]\nmu_t_grid = [1.0, 9.0]\nsigma_t_grid = [0.2, 0.6]\n")
    assert main(["sweep", "--config", str(cfg), "--runs", "2", "--out", str(tmp_path)]) == 0
    for name, param in (("fig5_data.csv", "mu_t"), ("fig6_data.csv", "sigma_t")):
        rows = read(tmp_path / name)
        assert rows[0][0] == param
        assert {"pos_rmse_one_an", "pos_rmse_two_an", "off_rmse_one_an",
                "off_rmse_two_an"} <= set(rows[0])
        assert [float(r[0]) for r in rows[1:]] == ([1.0, 9.0] if param == "mu_t" else [0.2, 0.6])
    out = capsys.readouterr().out
    assert "sweep over mu_t" in out and "sweep over sigma_t" in out


@pytest.mark.slow
def test_verify_exit_zero(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 6
