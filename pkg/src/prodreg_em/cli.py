"""Command-line interface: fit, simulate, ni-demo, report.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from pathlib import Path

from . import __version__
from .bootstrap import BootstrapError, bootstrap_ci
from .dataio import DataFormatError, read_data_csv, read_json
from .em import EmConfig, fit
from .estep import GridConfig, Method
from .model import ModelSpec
from .quadrature import scaling_table
from .report import GROUPABLE, read_results, summarize, write_results, write_summary
from .simulation import SimConfig, SimConfigError, expand_conditions, mdp_counts, run_condition

log = logging.getLogger("prodreg_em")

THREADS_ENV = "PRODREG_EM_THREADS"


class UsageError(Exception):
    pass


def _threads(value):
    if value is not None:
        return max(1, int(value))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _seed(value):
    if value is not None:
        return int(value)
    seed = secrets.randbits(32)
    print(f"seed: {seed}", file=sys.stderr)
    log.info("no --seed given; using %d", seed)
    return seed


def fit_document(spec: ModelSpec, header, point, boot, method, seed) -> dict:
    names = spec.names(header[1:] if header else None)
    coefs = []
    for j in range(spec.d):
        entry = {"index": j, "term": names[j], "order": spec.order(j),
                 "free": spec.free_mask[j], "estimate": float(point.theta.beta[j])}
        if boot is not None:
            entry["ci_low"] = float(boot.lower[j])
            entry["ci_high"] = float(boot.upper[j])
        coefs.append(entry)
    doc = {
        "model": spec.to_json(),
        "method": Method(method).value,
        "theta": point.theta.to_json(),
        "coefficients": coefs,
        "convergence": {
            "converged": point.converged,
            "iterations": point.iterations,
            "last_change": point.last_change,
            "loglik": point.loglik_trace[-1] if point.loglik_trace else None,
        },
        "warnings": list(point.warnings),
    }
    if boot is not None:
        doc["bootstrap"] = {"B": boot.n_boot, "level": boot.level, "seed": seed,
                            "used": boot.n_used, "failed": boot.n_failed,
                            "nonconverged": boot.n_nonconverged}
        doc["warnings"] += list(boot.warnings)
    return doc


def _print_table(doc: dict) -> None:
    boot = "bootstrap" in doc
    head = f"{'term':<20} {'estimate':>18}"
    if boot:
        head += f" {'ci_low':>18} {'ci_high':>18}"
    print(head)
    for c in doc["coefficients"]:
        line = f"{c['term']:<20} {c['estimate']:>18.12g}"
        if boot:
            line += f" {c['ci_low']:>18.12g} {c['ci_high']:>18.12g}"
        print(line)
    th = doc["theta"]
    conv = doc["convergence"]
    print(f"sigma2_eps = {th['sigma2_eps']:.12g}")
    print(f"converged = {conv['converged']} after {conv['iterations']} iterations")
    for w in doc["warnings"]:
        print(f"warning: {w}")


def cmd_fit(args) -> int:
    spec = ModelSpec.from_json(read_json(args.model))
    y, X, header = read_data_csv(args.data, spec.p)
    config = EmConfig(method=Method(args.method.upper()), tol=args.tol, max_iter=args.max_iter,
                      grid=GridConfig(args.points, args.half_width), track_loglik=True)
    point = fit(spec, y, X, config)
    boot = seed = None
    if args.boot:
        seed = _seed(args.seed)
        boot = bootstrap_ci(spec, y, X, config, args.boot, args.level, seed,
                            theta0=point.theta, threads=_threads(args.threads))
    doc = fit_document(spec, header, point, boot, config.method, seed)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    _print_table(doc)
    return 0


def _em_from_config(doc: dict) -> EmConfig:
    em = doc.get("em", {})
    return EmConfig(tol=float(em.get("tol", 1e-6)), max_iter=int(em.get("max_iter", 500)),
                    grid=GridConfig(int(em.get("target_points", 1000)),
                                    float(em.get("half_width_sd", 5.0))),
                    track_loglik=False)


def cmd_simulate(args) -> int:
    doc = read_json(args.config)
    if "conditions" not in doc:
        raise UsageError("config needs a 'conditions' object")
    base_seed = int(doc["seed"]) if "seed" in doc else _seed(args.seed)
    if args.seed is not None:
        base_seed = int(args.seed)
    em = _em_from_config(doc)
    boot = doc.get("bootstrap", {})
    B = int(boot.get("B", 200))
    level = float(boot.get("level", 0.95))
    methods = [Method(m.upper()) for m in doc.get("methods", ["HYB", "NI"])]
    threads = _threads(args.threads)
    conditions = expand_conditions(doc["conditions"], base_seed, float(doc.get("zeta", 0.7)))
    out = Path(args.out)
    if not args.append:
        write_results(out, [])
    ran = 0
    for cond in conditions:
        try:
            config = SimConfig(**cond)
            mdp_counts(config.n, config.phi_mis, config.phi_mdp3)
            if config.p < 3:
                raise SimConfigError("p >= 3 needed for a product pair plus an anchor")
        except SimConfigError as exc:
            log.warning("skipping condition %s: %s", cond, exc)
            print(f"skipping condition {cond}: {exc}", file=sys.stderr)
            continue
        rows = run_condition(config, args.reps, em, B, level, threads=threads,
                             timing=not args.no_timing, methods=methods)
        write_results(out, rows, append=True)
        ran += 1
        log.info("condition %s done (%d rows)", cond, len(rows))
    if not ran:
        print("no valid conditions", file=sys.stderr)
        return 1
    return 0


def cmd_ni_demo(args) -> int:
    print(f"{'p':>3} {'per_axis':>9} {'total_points':>14} {'error':>12}")
    for row in scaling_table(args.max_dim, args.tol):
        print(f"{row.p:>3} {row.per_axis:>9} {row.total_points:>14} {row.error:>12.6g}")
    return 0


def cmd_report(args) -> int:
    fields = [f.strip() for item in args.by for f in item.split(",") if f.strip()]
    unknown = [f for f in fields if f not in GROUPABLE]
    if unknown:
        raise UsageError(f"unknown field(s): {', '.join(unknown)}; "
                         f"choose from {', '.join(GROUPABLE)}")
    write_summary(args.out, summarize(read_results(args.inp), fields))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prodreg-em",
        description="ML estimation of product-term regressions with missing data (EM).")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--method", default="hyb", choices=["hyb", "ni", "HYB", "NI"])
    p.add_argument("--boot", type=int, default=0, help="bootstrap replicates (0 = none)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--points", type=int, default=1000, help="target grid points per case")
    p.add_argument("--half-width", type=float, default=5.0, help="grid half-width in sds")
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run simulation conditions to a results CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int)
    p.add_argument("--append", action="store_true", help="append to an existing CSV")
    p.add_argument("--no-timing", action="store_true",
                   help="write seconds as 0 so output bytes are reproducible")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ni-demo", help="midpoint quadrature cost versus dimension")
    p.add_argument("--max-dim", type=int, default=5)
    p.add_argument("--tol", type=float, default=0.01)
    p.set_defaults(func=cmd_ni_demo)

    p = sub.add_parser("report", help="marginal means of a results CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--by", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, ValueError, BootstrapError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
