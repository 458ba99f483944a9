from __future__ import annotations

import json
from pathlib import Path

import pytest

from cplab.cli import main
from cplab.config import parse_config, save_config


def write_config(tmp_path: Path, **model) -> Path:
    cfg = parse_config({
        "model": {"d": 2, "L": 1, "epsilon": 0.5, "lambda": 0.9, **model},
        "schedule": {"n_max": 12, "T": [3.0], "queries": [{"times": [1.0, 1.0]}]},
        "budget": {"n_runs": 500, "seed": 1},
        "output": {"directory": str(tmp_path / "out")},
    })
    path = tmp_path / "c.toml"
    save_config(cfg, path)
    return path


def test_subcommands(tmp_path: Path, capsys) -> None:
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "cluster_sizes.csv").exists()
    assert main(["estimate", "--config", str(cfg), "--seed", "5", "--workers", "2"]) == 0
    assert main(["scaling-report", "--config", str(cfg), "--out", str(tmp_path / "rep"),
                 "--format", "csv"]) == 0
    assert (tmp_path / "rep" / "scaling_report.csv").exists()
    assert not (tmp_path / "rep" / "metadata.json").exists()
    capsys.readouterr()
    assert main(["sbm-moments", "--times", "1,2", "--d", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1.0)
    assert main(["bounds", "--eps", "1", "--s", "4,8", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bounds_sweep.csv").read_text().count("\n") == 3
    assert main(["verify", "--only", "2"]) == 0


def test_config_errors_exit_2(tmp_path: Path, capsys) -> None:
    bad = tmp_path / "bad.toml"
    bad.write_text(write_config(tmp_path).read_text().replace("lambda", "lamda"))
    assert main(["estimate", "--config", str(bad)]) == 2
    assert "model.lamda" in capsys.readouterr().err
    assert main(["estimate", "--config", str(tmp_path / "nope.toml")]) == 2
    assert main(["sbm-moments", "--times", "1,1,1,1,1", "--d", "2"]) == 2


def test_budget_exhausted_exit_3(tmp_path: Path) -> None:
    cfg = parse_config({
        "model": {"d": 5, "L": 2, "epsilon": 1.0, "lambda": "critical"},
        "schedule": {"n_max": 16},
        "budget": {"n_runs": 200, "seed": 2},
        "critical": {"bracket": [0.5, 2.0], "tol": 1e-6, "n_runs_cap": 400},
        "output": {"directory": str(tmp_path / "crit")},
    })
    path = tmp_path / "crit.toml"
    save_config(cfg, path)
    assert main(["critical-point", "--config", str(path)]) == 3
    result = json.loads((tmp_path / "crit" / "critical_point.json").read_text())
    assert "budget-exhausted" in result["flags"]


def test_bad_bracket_exit_2(tmp_path: Path) -> None:
    cfg = write_config(tmp_path, **{"lambda": "critical"})
    text = cfg.read_text().replace("[critical]\nbracket = [\n    0.9,\n    1.2,\n]",
                                   "[critical]\nbracket = [\n    0.1,\n    0.2,\n]")
    cfg.write_text(text)
    assert "0.1" in text
    assert main(["critical-point", "--config", str(cfg)]) == 2
