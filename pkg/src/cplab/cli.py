"""Command-line entry point: ``cplab <subcommand> [options]``.

Exit codes: 0 success, 1 failed verification, 2 configuration error
(including a bracket that does not straddle the critical point), 3 result
flagged as budget-exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .criticality import InvalidBracket
from .model import InvalidParameters

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _vectors(text: str) -> list[list[float]]:
    return [_floats(v) for v in text.split(";") if v.strip()]


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    config = load_config(args.config)
    over: dict = {}
    if args.seed is not None:
        over.setdefault("budget", {})["seed"] = args.seed
    if args.workers is not None:
        over.setdefault("budget", {})["workers"] = args.workers
    if args.out is not None:
        over.setdefault("output", {})["directory"] = args.out
    if args.format is not None:
        over.setdefault("output", {})["formats"] = [f.strip() for f in args.format.split(",")]
    return config.replace(**over) if over else config


def _print_json(obj) -> None:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return repr(x)
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x
    print(json.dumps(clean(obj), indent=2, sort_keys=True))


def cmd_simulate(args) -> int:
    from .engine import simulate
    from .experiment import model_params, resolve_lambda

    config = _load(args)
    lam, _ = resolve_lambda(config)
    params = model_params(config, lam)
    sizes: list[int] = []
    trace = simulate(params, config.schedule.n_max, config.budget.seed,
                     visitor=lambda f: sizes.append(len(f)), replica=args.replica,
                     keep_slices=False)
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cluster_sizes.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_steps", "t_real", "size"])
        for n, s in enumerate(sizes):
            w.writerow([n, repr(n * params.epsilon), s])
    _print_json({"lambda": lam, "replica": args.replica, "died_at": trace.died_at,
                 "final_size": sizes[-1] if sizes else 0})
    return EXIT_OK


def cmd_estimate(args) -> int:
    from .estimators import fit_constants
    from .experiment import ResultRecord, base_tables, input_hash, model_params, resolve_lambda
    from .output import emit_outputs

    config = _load(args)
    lam, crit = resolve_lambda(config)
    params = model_params(config, lam)
    b, s = config.budget, config.schedule
    tables = base_tables(params, s.n_max, b.n_runs, b.seed, b.workers, b.block_size)
    consts = fit_constants(tables["two_point"], tables["msd"], tables["three_point"], params,
                           s.window, s.n_max)
    flags = list(crit.flags) if crit else []
    meta = {"seed": b.seed, "n_runs": b.n_runs, "lambda": lam, "constants": consts.as_dict(),
            "flags": flags}
    rec = ResultRecord(config.content_hash(), input_hash(config), tables, [], consts, crit, meta)
    emit_outputs(rec, config.output.directory, config.output.formats)
    _print_json(meta)
    return EXIT_BUDGET if "budget-exhausted" in flags else EXIT_OK


def cmd_critical(args) -> int:
    from .experiment import model_params
    from .criticality import locate_lambda_c

    config = _load(args)
    c, b = config.critical, config.budget
    est = locate_lambda_c(model_params(config, 0.0), c.bracket, c.n_max or config.schedule.n_max,
                          c.n_runs or b.n_runs, c.tol, b.seed, c.n_runs_cap, c.z,
                          window=config.schedule.window, workers=b.workers)
    result = {"lambda_low": est.lambda_low, "lambda_high": est.lambda_high,
              "midpoint": est.midpoint, "lambda_hat": est.lambda_hat,
              "converged": est.converged, "flags": est.flags, "settings": est.settings,
              "trace": [vars(d) for d in est.trace]}
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "critical_point.json").write_text(json.dumps(result, indent=2, default=str) + "\n",
                                            encoding="utf-8")
    _print_json({k: v for k, v in result.items() if k != "trace"})
    return EXIT_BUDGET if "budget-exhausted" in est.flags else EXIT_OK


def cmd_sbm(args) -> int:
    from .sbm import MomentQuery, Quadrature, m_hat

    times = _floats(args.times)
    ks = _vectors(args.ks) if args.ks else [[0.0] * args.d for _ in times]
    try:
        query = MomentQuery(tuple(times), tuple(map(tuple, ks)), args.d, Quadrature(tol=args.tol))
    except ValueError as err:
        raise ConfigError(str(err)) from None
    res = m_hat(query)
    _print_json({"times": times, "ks": ks, "d": args.d, "value": res.value, "error": res.error,
                 "converged": res.converged, "flags": list(res.flags)})
    return EXIT_OK


def cmd_bounds(args) -> int:
    from .bounds import BoundKernelParams, lemma_sums

    rows = []
    for eps in _floats(args.eps):
        p = BoundKernelParams(args.d, eps, args.kappa, beta_T=args.beta_T,
                              beta_hat_T=args.beta_hat_T)
        for s in _floats(args.s):
            if args.d > 4:
                r = lemma_sums(p, s=s)
                rows.append([eps, s, r.sum1, r.env1, r.ratio1, r.sum2, r.env2, r.ratio2])
            else:
                r = lemma_sums(p, T=s)
                rows.append([eps, s, r.lowdim, r.env_low, r.ratio_low])
    header = (["eps", "s", "sum1", "env1", "ratio1", "sum2", "env2", "ratio2"] if args.d > 4
              else ["eps", "T", "lowdim", "env_low", "ratio_low"])
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bounds_sweep.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(float(x)) for x in row] for row in rows])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows([[f"{x:.6g}" for x in row] for row in rows])
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiment import run_scaling_experiment
    from .output import emit_outputs

    config = _load(args)
    rec = run_scaling_experiment(config)
    paths = emit_outputs(rec, config.output.directory, config.output.formats)
    for row in rec.report:
        print(f"T={row.T:g} r={row.r} steps={row.steps}: ratio {row.ratio:.4f} +- {row.ratio_se:.4f}")
    print(f"wrote {len(paths)} files to {config.output.directory}")
    return EXIT_BUDGET if "budget-exhausted" in rec.flags else EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_all

    only = {int(x) for x in args.only.split(",")} if args.only else None
    checks = run_all(only, skip_slow=args.quick)
    for c in checks:
        print(c.line(), flush=True)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="override budget.seed")
    common.add_argument("--workers", type=int, help="override budget.workers")
    common.add_argument("--out", help="override output.directory")
    common.add_argument("--format", help="comma-separated output formats (csv,json)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one cluster")
    p.add_argument("--replica", type=int, default=0)
    p.set_defaults(func=cmd_simulate)
    sub.add_parser("estimate", parents=[common], help="estimate tables and fit A, v, V"
                   ).set_defaults(func=cmd_estimate)
    sub.add_parser("critical-point", parents=[common], help="locate the critical rate"
                   ).set_defaults(func=cmd_critical)

    p = sub.add_parser("sbm-moments", parents=[common], help="evaluate an SBM moment")
    p.add_argument("--times", required=True, help="comma-separated times")
    p.add_argument("--ks", help="semicolon-separated momentum vectors")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_sbm)

    p = sub.add_parser("bounds", parents=[common], help="sweep the b-kernel sums")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--kappa", type=float, default=0.4)
    p.add_argument("--eps", default="1,0.5,0.1,0.01")
    p.add_argument("--s", default=",".join(str(s) for s in range(4, 129, 4)),
                   help="values of s (d > 4) or of T (d <= 4)")
    p.add_argument("--beta-T", dest="beta_T", type=float)
    p.add_argument("--beta-hat-T", dest="beta_hat_T", type=float)
    p.set_defaults(func=cmd_bounds)

    sub.add_parser("scaling-report", parents=[common], help="full scaling experiment"
                   ).set_defaults(func=cmd_report)

    p = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--quick", action="store_true", help="skip the long snapshot run")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidParameters, InvalidBracket) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
