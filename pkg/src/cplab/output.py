"""Persisting result records: fixed-schema CSVs, JSON metadata, a plot script.

CSV files are UTF-8 with LF line endings; floats are written with ``repr``
so that reading a table back reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .experiment import OBSERVABLES, ResultRecord
from .stats import Estimate, EstimateTable, Row

TABLE_COLUMNS = ("t_steps", "t_real", "k_index", "value", "stderr", "n_runs")
REPORT_COLUMNS = ("T", "query", "r", "steps", "measured", "measured_se", "predicted",
                  "predicted_se", "ratio", "ratio_se")

PLOT_SCRIPT = '''"""Plot every observable table in this directory (needs matplotlib)."""
import csv
import pathlib

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).parent
for path in sorted(here.glob("*.csv")):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "t_real" not in rows[0]:
        continue
    t = [float(r["t_real"]) for r in rows]
    y = [float(r["value"]) for r in rows]
    e = [float(r["stderr"]) for r in rows]
    fig, ax = plt.subplots()
    ax.errorbar(t, y, yerr=e, fmt=".", ms=3)
    ax.set_xlabel("t")
    ax.set_title(path.stem)
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
'''


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_table(table: EstimateTable, path: Path) -> None:
    eps = table.epsilon
    _write_csv(path, TABLE_COLUMNS,
               ((r.t_steps, r.t_steps * eps, r.k_index, r.estimate.value,
                 float(r.estimate.stderr), r.estimate.n_runs) for r in table.rows))


def read_table(path: str | Path, observable: str | None = None,
               epsilon: float | None = None) -> EstimateTable:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TABLE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    if epsilon is None:
        epsilon = next((float(r["t_real"]) / int(r["t_steps"]) for r in rows
                        if int(r["t_steps"])), math.nan)
    table = EstimateTable(observable or path.stem, epsilon)
    for r in rows:
        est = Estimate(complex(float(r["value"]), 0.0), float(r["stderr"]), int(r["n_runs"]))
        table.rows.append(Row(int(r["t_steps"]), int(r["k_index"]), est))
    return table


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def emit_outputs(record: ResultRecord, out_dir: str | Path,
                 formats=("csv", "json")) -> list[Path]:
    """Write the record under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    written = []
    if "csv" in formats:
        for name in OBSERVABLES:
            table = record.tables.get(name) or EstimateTable(name, math.nan)
            path = out / f"{name}.csv"
            write_table(table, path)
            written.append(path)
        path = out / "scaling_report.csv"
        _write_csv(path, REPORT_COLUMNS,
                   ([row.columns()[c] for c in REPORT_COLUMNS] for row in record.report))
        written.append(path)
        path = out / "plot_results.py"
        path.write_text(PLOT_SCRIPT, encoding="utf-8")
        written.append(path)
    if "json" in formats:
        meta = {"config_hash": record.config_hash, "input_hash": record.input_hash,
                **record.metadata}
        path = out / "metadata.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written
