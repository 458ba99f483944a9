from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from cplab.config import parse_config
from cplab.estimators import MomentumClampError
from cplab.experiment import MissingConstants, ResultRecord, run_scaling_experiment
from cplab.output import TABLE_COLUMNS, emit_outputs, read_table

CFG = {
    "model": {"d": 2, "L": 1, "epsilon": 0.5, "lambda": 0.95},
    "schedule": {"n_max": 20, "T": [5.0, 10.0],
                 "queries": [{"times": [1.0]}, {"times": [1.0, 1.0]}, {"times": [0.5, 1.0]},
                             {"times": [1.0, 1.0], "kappas": [[0.5, 0.0], [-0.5, 0.3]]}]},
    "budget": {"n_runs": 3000, "seed": 12, "block_size": 250},
}


@pytest.fixture(scope="module")
def record() -> ResultRecord:
    return run_scaling_experiment(parse_config(CFG))


def test_report_predictions(record: ResultRecord) -> None:
    c = record.constants
    rows = {(r.T, r.query): r for r in record.report}
    assert len(rows) == 8
    for T in (5.0, 10.0):
        r2 = rows[(T, 0)]
        assert r2.r == 2 and r2.predicted == c.A
        assert r2.ratio == pytest.approx(record.tables["two_point"].get(round(T / 0.5)).value / c.A)
        for qi in (1, 2):  # zero momenta: M^(2)_{(1,1)} = M^(2)_{(0.5,1)} * 2 = 1
            want = c.A**3 * c.V * T * (1.0 if qi == 1 else 0.5)
            assert rows[(T, qi)].predicted == pytest.approx(want, rel=1e-10)
        r3 = rows[(T, 1)]
        assert r3.steps == (round(T / 0.5),) * 2
        assert r3.measured == record.tables["three_point"].get(r3.steps[0]).value
        assert r3.ratio_se > 0 and math.isfinite(r3.ratio)
    assert record.metadata["config_hash"] == parse_config(CFG).content_hash()


def test_outputs_are_deterministic(record: ResultRecord, tmp_path: Path) -> None:
    a, b = tmp_path / "a", tmp_path / "b"
    emit_outputs(record, a)
    emit_outputs(run_scaling_experiment(parse_config(CFG).replace(budget={"workers": 3})), b)
    for f in ("two_point.csv", "msd.csv", "survival.csv", "three_point.csv", "scaling_report.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    raw = (a / "two_point.csv").read_bytes()
    assert b"\r" not in raw and raw.startswith(",".join(TABLE_COLUMNS).encode() + b"\n")
    meta = json.loads((a / "metadata.json").read_text())
    assert meta["config_hash"] == record.config_hash and "constants" in meta
    assert (a / "plot_results.py").exists()


def test_csv_round_trip(record: ResultRecord, tmp_path: Path) -> None:
    emit_outputs(record, tmp_path, ("csv",))
    for name in ("two_point", "msd"):
        back = read_table(tmp_path / f"{name}.csv")
        orig = record.tables[name]
        assert [(r.t_steps, r.k_index, r.estimate.value, r.estimate.stderr, r.estimate.n_runs)
                for r in back.rows] == \
               [(r.t_steps, r.k_index, r.estimate.value, r.estimate.stderr, r.estimate.n_runs)
                for r in orig.rows]


def test_empty_record(tmp_path: Path) -> None:
    emit_outputs(ResultRecord("h", "i"), tmp_path)
    assert (tmp_path / "two_point.csv").read_text() == ",".join(TABLE_COLUMNS) + "\n"
    assert json.loads((tmp_path / "metadata.json").read_text())["config_hash"] == "h"


def test_error_paths() -> None:
    dead = {**CFG, "model": {**CFG["model"], "lambda": 0.0}}
    with pytest.raises(MissingConstants):
        run_scaling_experiment(parse_config(dead))
    wide = {**CFG, "schedule": {**CFG["schedule"], "queries": [
        {"times": [1.0], "kappas": [[50.0, 0.0]]}]}}
    with pytest.raises(MomentumClampError):
        run_scaling_experiment(parse_config(wide))
    off_grid = {**CFG, "schedule": {**CFG["schedule"], "T": [3.3]}}
    with pytest.raises(ValueError):
        run_scaling_experiment(parse_config(off_grid))
