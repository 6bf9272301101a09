"""Command-line front end: ``coopcache {solve,bounds,experiment,gen-trace}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from coopcache.errors import CoopCacheError
from coopcache.heuristics import algcov, gap_asymmetric, gap_symmetric, iad, lower_bound_flb, psc
from coopcache.indirect import LayeredModel, effective_direct_model
from coopcache.planner import build_reduced_lp, optimal_plan, solve_lp_plan
from coopcache.probmodel import MAX_FULL_ENUMERATION_USERS, ProbabilityMatrix
from coopcache.setcover import sampled_setcover_bound, weighted_setcover_bound
from coopcache.sim.experiment import ExperimentConfig, run_experiment
from coopcache.sim.trace import generate_bernoulli_trace, intervalize, read_trace_csv, write_trace_csv

log = logging.getLogger("coopcache")

METHODS = ("full", "reduced", "symmetric", "psc", "iad", "algcov")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _load_model(path: str):
    """Return a ``ProbabilityMatrix`` or, for documents with ``layers``, a ``LayeredModel``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError("parse", f"{path}: {exc}") from None
    if isinstance(doc, dict) and "layers" in doc:
        return LayeredModel.from_dict(doc)
    if isinstance(doc, list):
        return ProbabilityMatrix(np.asarray(doc, dtype=float))
    return ProbabilityMatrix.from_dict(doc)


def _floats(v) -> list[float]:
    return [float(a) for a in np.asarray(v).ravel()]


def cmd_solve(args) -> dict:
    model = _load_model(args.matrix)
    rec = {"method": args.method}
    if isinstance(model, LayeredModel):
        eff = effective_direct_model(model)
        rec["indirect"] = True
        if args.method in ("full", "symmetric"):
            raise CliError("unsupported", f"method {args.method!r} is not available for layered models")
        if args.method == "reduced":
            cv, sol = solve_lp_plan(build_reduced_lp(model.n, eff.weights), model.n)
            rec.update(x=_floats(cv.x), objective=sol.optimum)
            return rec
        pm = eff.coverage
    else:
        pm = model
        if args.method in ("full", "reduced", "symmetric"):
            cv, value = optimal_plan(pm, args.method)
            rec.update(x=_floats(cv.x), objective=value)
            return rec
    res = {"psc": psc, "iad": iad, "algcov": algcov}[args.method](pm)
    rec.update(x=_floats(res.x.x), lower_bound=res.lower_bound_used)
    if res.branch:
        rec["branch"] = res.branch
    return rec


def cmd_bounds(args) -> dict:
    model = _load_model(args.matrix)
    if isinstance(model, LayeredModel):
        raise CliError("unsupported", "bounds are defined for direct-sharing matrices only")
    pm, n = model, model.n
    rec: dict = {"n": n}
    symmetric = pm.is_symmetric and pm.is_uniform
    p = float(pm.offdiagonal()[0]) if n > 1 else 0.0
    if symmetric:
        rec["f_lb"] = lower_bound_flb(n, p)
    if n <= MAX_FULL_ENUMERATION_USERS:
        rec["setcover_bound"] = {"value": weighted_setcover_bound(pm), "exact": True}
    else:
        rec["setcover_bound"] = sampled_setcover_bound(pm, args.samples, args.seed).to_dict()
    if n >= 2:
        rec["gap"] = (gap_symmetric(n, p) if symmetric else gap_asymmetric(pm)).to_dict()
    try:
        rec["optimum"] = optimal_plan(pm, "reduced")[1]
    except CoopCacheError as exc:
        rec["optimum"] = None
        log.warning("optimum skipped: %s", exc)
    return rec


def cmd_experiment(args) -> dict:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode:
        cfg.modes = list(args.mode)
    cfg.validate()
    trace = read_trace_csv(args.trace)
    itrace = intervalize(
        trace, cfg.interval_seconds, cfg.min_contact_fraction, start=cfg.window_start, end=cfg.window_end
    )
    report = run_experiment(cfg, itrace, jobs=args.jobs)
    if args.out:
        report.write_csv(args.out)
    else:
        sys.stdout.write(report.to_csv_string())
    return {"rows": len(report.rows), "groups": [list(g) for g in report.groups], "out": args.out}


def cmd_gen_trace(args) -> dict:
    if args.matrix:
        model = _load_model(args.matrix)
        mats = list(model.layers) if isinstance(model, LayeredModel) else model
    else:
        if args.n is None or args.p is None:
            raise CliError("usage", "give either --matrix or both --n and --p")
        mats = ProbabilityMatrix.uniform(args.n, args.p)
    itrace = generate_bernoulli_trace(mats, args.intervals, args.seed, args.interval_seconds)
    write_trace_csv(itrace.to_encounter_trace(), args.out)
    return {"out": args.out, "users": itrace.num_users, "intervals": itrace.num_intervals}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coopcache", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="compute a cache vector for a probability matrix")
    s.add_argument("matrix", help="matrix JSON ({'n', 'p'} or {'n', 'layers'})")
    s.add_argument("--method", choices=METHODS, default="reduced")
    s.add_argument("--json", action="store_true", help="print one JSON record")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bounds", help="lower bounds and heuristic gaps")
    b.add_argument("matrix")
    b.add_argument("--samples", type=int, default=2000, help="set-cover samples when n > 6")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bounds)

    e = sub.add_parser("experiment", help="replay strategies on a trace and write a cost report")
    e.add_argument("config")
    e.add_argument("trace")
    e.add_argument("--out", help="report CSV path (stdout if omitted)")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--seed", type=int)
    e.add_argument("--mode", choices=("direct", "indirect"), action="append")
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_experiment)

    g = sub.add_parser("gen-trace", help="write a synthetic Bernoulli encounter trace")
    g.add_argument("--matrix")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--intervals", type=int, required=True)
    g.add_argument("--interval-seconds", type=float, default=900.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_gen_trace)
    return ap


def _print_human(rec: dict) -> None:
    for k, v in rec.items():
        if isinstance(v, float):
            v = f"{v:.10g}"
        elif isinstance(v, list) and v and isinstance(v[0], float):
            v = " ".join(f"{a:.10g}" for a in v)
        elif isinstance(v, dict):
            v = json.dumps(v)
        print(f"{k}: {v}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rec = args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}))
        return 1
    except (CoopCacheError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    if args.command == "experiment" and not args.out:
        return 0
    if args.json:
        print(json.dumps(rec))
    else:
        _print_human(rec)
    return 0


if __name__ == "__main__":
    sys.exit(main())
