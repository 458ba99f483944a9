"""End-to-end scaling experiment: resolve the rate, estimate, fit, compare with SBM."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .criticality import CriticalEstimate, locate_lambda_c
from .engine import ReplicaPlan
from .estimators import (FittedConstants, accumulate, fit_constants, map_momenta,
                         r_point_statistic)
from .model import ModelParams
from .sbm import MomentQuery, m_hat
from .stats import EstimateTable, Row

log = logging.getLogger(__name__)

OBSERVABLES = ("two_point", "survival", "msd", "three_point")


class MissingConstants(ValueError):
    pass


@dataclass(frozen=True)
class ReportRow:
    T: float
    query: int
    r: int
    steps: tuple[int, ...]
    measured: float
    measured_se: float
    predicted: float
    predicted_se: float
    ratio: float
    ratio_se: float

    def columns(self) -> dict:
        return {
            "T": self.T, "query": self.query, "r": self.r,
            "steps": " ".join(str(n) for n in self.steps),
            "measured": self.measured, "measured_se": self.measured_se,
            "predicted": self.predicted, "predicted_se": self.predicted_se,
            "ratio": self.ratio, "ratio_se": self.ratio_se,
        }


@dataclass
class ResultRecord:
    config_hash: str
    input_hash: str
    tables: dict[str, EstimateTable] = field(default_factory=dict)
    report: list[ReportRow] = field(default_factory=list)
    constants: FittedConstants | None = None
    critical: CriticalEstimate | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def flags(self) -> list[str]:
        return list(self.metadata.get("flags", []))


def input_hash(config: ExperimentConfig) -> str:
    """Git-style blob hash of the canonical inputs."""
    data = config.to_dict()
    data["budget"].pop("workers", None)
    data.pop("output", None)
    body = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def model_params(config: ExperimentConfig, lam: float) -> ModelParams:
    m = config.model
    if m.range_scaling is None:
        return ModelParams.uniform(m.d, m.L, m.epsilon, lam)
    rs = m.range_scaling
    return ModelParams.range_scaled(m.d, rs.L1, rs.b, rs.T, m.epsilon, lam)


def resolve_lambda(config: ExperimentConfig) -> tuple[float, CriticalEstimate | None]:
    lam = config.model.lam
    if lam != "critical":
        return float(lam), None
    c, b = config.critical, config.budget
    template = model_params(config, 0.0)
    est = locate_lambda_c(template, c.bracket, c.n_max or config.schedule.n_max,
                          c.n_runs or b.n_runs, c.tol, b.seed, c.n_runs_cap, c.z,
                          window=config.schedule.window, workers=b.workers)
    return est.lambda_hat, est


def base_tables(params: ModelParams, n_max: int, n_runs: int, seed: int, workers: int = 1,
                block_size: int = 1000) -> dict[str, EstimateTable]:
    """Two-point mass, survival, MSD and the (t, t) three-point mass on steps 0..n_max."""
    steps = list(range(n_max + 1))
    plan = ReplicaPlan.build(steps, [], params.d)

    def reducer(b):
        mass = b.mass.astype(np.float64)
        return {"two_point": mass, "survival": (b.mass > 0).astype(np.float64),
                "three_point": mass * mass, "msd": (b.sqdisp.astype(np.float64), mass)}

    accs = accumulate(params, plan, n_runs, seed, reducer, workers, block_size)
    tables = {}
    for name in OBSERVABLES:
        table = EstimateTable(name, params.epsilon)
        acc = accs[name]
        for n in steps:
            j = plan.step_index(n)
            est = acc.ratio(j) if name == "msd" else acc.estimate(j)
            table.rows.append(Row(n, 0, est))
        tables[name] = table
    return tables


def _query_steps(times, T: float, eps: float, n_max: int) -> tuple[int, ...]:
    steps = []
    for t in times:
        n = round(t * T / eps)
        if abs(n * eps - t * T) > 1e-9 * max(1.0, t * T) or n > n_max or n < 1:
            raise ValueError(f"time {t}*T={t * T} is not a grid step within n_max={n_max}")
        steps.append(int(n))
    return tuple(steps)


def _prediction(c: FittedConstants, r: int, T: float, moment) -> tuple[float, float]:
    if r >= 3 and not c.V_defined:
        raise MissingConstants("V is undefined for this run; r >= 3 predictions need it")
    base = c.A * (c.A**2 * c.V * T) ** (r - 2) if r >= 3 else c.A
    value = base * moment.value
    rel = [(2 * r - 3) * c.se_A / c.A if c.A else math.inf]
    if r >= 3:
        rel.append((r - 2) * c.se_V / c.V)
    if moment.value:
        rel.append(moment.error / abs(moment.value))
    return value, abs(value) * math.sqrt(sum(x * x for x in rel))


def run_scaling_experiment(config: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    b, s = config.budget, config.schedule
    lam, crit = resolve_lambda(config)
    params = model_params(config, lam)
    tables = base_tables(params, s.n_max, b.n_runs, b.seed, b.workers, b.block_size)
    consts = fit_constants(tables["two_point"], tables["msd"], tables["three_point"], params,
                           s.window, s.n_max)

    if s.T and s.queries:
        if not (consts.v > 0 and math.isfinite(consts.v)):
            raise MissingConstants("v is not positive; momenta cannot be rescaled")
        if not consts.V_defined and any(len(q.times) >= 2 for q in s.queries):
            raise MissingConstants("V is undefined for this run; r >= 3 predictions need it")

    jobs = []  # (T, query index, steps, k rows)
    ks_all: list[tuple] = []
    for T in s.T:
        for qi, q in enumerate(s.queries):
            steps = _query_steps(q.times, T, params.epsilon, s.n_max)
            kappas = q.kappas or [[0.0] * params.d for _ in q.times]
            ks = map_momenta(kappas, consts.v, params.kernel.sigma2, T)
            rows = []
            for k in ks:
                key = tuple(float(c) for c in k)
                if key not in ks_all:
                    ks_all.append(key)
                rows.append(ks_all.index(key))
            jobs.append((T, qi, steps, rows))

    report = []
    if jobs:
        plan = ReplicaPlan.build(sorted({n for j in jobs for n in j[2]}), ks_all, params.d)
        accs = accumulate(params, plan, b.n_runs, b.seed,
                          lambda blk: {i: r_point_statistic(blk, plan, j[2], j[3])
                                       for i, j in enumerate(jobs)},
                          b.workers, b.block_size)
        for i, (T, qi, steps, _) in enumerate(jobs):
            q = s.queries[qi]
            r = len(q.times) + 1
            est = accs[i].estimate(())
            kappas = q.kappas or [[0.0] * params.d for _ in q.times]
            moment = m_hat(MomentQuery(tuple(q.times), tuple(map(tuple, kappas)), params.d))
            pred, pred_se = _prediction(consts, r, T, moment)
            ratio = est.value / pred if pred else math.nan
            rel = math.hypot(est.stderr / est.value if est.value else math.inf,
                             pred_se / pred if pred else math.inf)
            report.append(ReportRow(T, qi, r, steps, est.value, est.stderr, pred, pred_se,
                                    ratio, abs(ratio) * rel))

    flags = list(crit.flags) if crit else []
    meta = {
        "config_hash": config.content_hash(),
        "input_hash": input_hash(config),
        "seed": b.seed,
        "n_runs": b.n_runs,
        "lambda": lam,
        "lambda_source": "located critical point" if crit is not None else "given",
        "constants": consts.as_dict(),
        "flags": flags,
        "wall_time_s": time.perf_counter() - t0,
    }
    if crit is not None:
        meta["critical"] = {"lambda_low": crit.lambda_low, "lambda_high": crit.lambda_high,
                            "midpoint": crit.midpoint, "lambda_hat": crit.lambda_hat,
                            "converged": crit.converged, "probes": len(crit.trace),
                            "settings": crit.settings}
    return ResultRecord(meta["config_hash"], meta["input_hash"], tables, report, consts, crit,
                        meta)
