"""Command-line harness: run benchmarks, sweep the smoothing demos, and
compute brute-force references.

Exit codes for ``solve``: 0 converged, 2 iteration budget exhausted,
3 restoration stopped at a critical point of the constraint violation,
1 anything else (bad arguments, I/O, oracle failure).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bundle import SolveReport, solve
from .model import ALPHA_STRATEGIES, SolverConfig
from .problems import DEMO_PROBLEMS, REGISTRY, make_problem
from .reference import REFERENCE_PROBLEMS, solve_extensive
from .twostage import smoothing_demo

SCHEMA_VERSION = 1
TRACE_COLUMNS = ["k", "step_kind", "r", "merit", "step_norm", "alpha", "beta",
                 "theta", "pi", "kkt_residual", "oracle_calls"]

_EXIT_BY_STATUS = {"converged": 0, "max_iters": 2, "restoration_critical_point": 3}


def _fmt(x) -> str:
    return "" if x is None else f"{x:.17e}"


def write_trace_csv(records, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            writer.writerow([r.k, r.step_kind, _fmt(r.r_value), _fmt(r.merit_value),
                             _fmt(r.step_norm), _fmt(r.alpha), _fmt(r.beta),
                             _fmt(r.theta), _fmt(r.pi), _fmt(r.kkt_residual),
                             r.oracle_calls])


def _report_dict(name: str, report: SolveReport, cfg: SolverConfig,
                 reference_objective=None) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "problem": name,
        "status": report.status,
        "exit_code": _EXIT_BY_STATUS.get(report.status, 1),
        "iterations": report.iterations,
        "serious_steps": report.serious_steps,
        "rejected_steps": report.rejected_steps,
        "final_x": [float(v) for v in report.final_x],
        "objective": report.final_objective,
        "theta_final": report.theta_final,
        "alpha_final": report.alpha_final,
        "pi_final": report.pi_final,
        "kkt_residual": report.final_kkt_residual,
        "final_step_norm": report.final_step_norm,
        "oracle_calls": report.oracle_calls,
        "qp_solves": report.qp_solves,
        "kernel_solves": report.kernel_solves,
        "restoration_entries": report.restoration_entries,
        "delta_f_last": report.delta_f_last,
        "config": {
            "alpha0": cfg.alpha0, "eps": cfg.eps, "max_iters": cfg.max_iters,
            "alpha_strategy": cfg.alpha_strategy, "eta_alpha": cfg.eta_alpha,
            "eta_beta": cfg.eta_beta, "gamma": cfg.gamma,
        },
    }
    if reference_objective is not None:
        out["reference_objective"] = reference_objective
        denom = max(1.0, abs(reference_objective))
        out["reference_gap"] = (report.final_objective - reference_objective) / denom
    return out


def _nan_safe(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_safe(v) for v in obj]
    return obj


def _write_json(payload: dict, path):
    with open(path, "w") as fh:
        json.dump(_nan_safe(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve(args) -> int:
    try:
        bench = make_problem(args.problem, seed=args.seed, K=args.K,
                             mu=args.mu, tie_break=args.tie_break)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    overrides = dict(bench.config_overrides)
    for key in ("alpha0", "eps", "max_iters", "alpha_strategy"):
        value = getattr(args, key.replace("-", "_"))
        if value is not None:
            overrides[key] = value
    cfg = SolverConfig(**overrides)

    reference_objective = bench.reference_objective
    if args.reference:
        try:
            with open(args.reference) as fh:
                reference_objective = json.load(fh)["objective"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: cannot read reference file: {exc}", file=sys.stderr)
            return 1

    report = solve(bench.problem, bench.x0, cfg)
    if report.status == "oracle_failure":
        print(f"error: oracle failure: {report.message}", file=sys.stderr)
        return 1

    payload = _report_dict(args.problem, report, cfg, reference_objective)
    try:
        if args.trace:
            write_trace_csv(report.trace, args.trace)
            if not args.no_figures:
                from .figures import render_trace
                render_trace(report.trace, Path(args.trace).with_suffix(".png"),
                             title=args.problem)
        if args.report:
            _write_json(payload, args.report)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.problem}: {report.status} after {report.iterations} iterations, "
          f"objective {report.final_objective:.12g}"
          + (f", reference gap {payload.get('reference_gap'):.3e}"
             if "reference_gap" in payload else ""))
    return _EXIT_BY_STATUS.get(report.status, 1)


def cmd_sweep(args) -> int:
    if args.problem not in DEMO_PROBLEMS:
        print(f"error: sweep supports {', '.join(DEMO_PROBLEMS)}", file=sys.stderr)
        return 1
    try:
        mus = [float(v) for v in args.mu.split(",") if v.strip()]
    except (AttributeError, ValueError):
        print("error: --mu must be a comma-separated list for sweep", file=sys.stderr)
        return 1
    if not mus or args.x_step <= 0 or args.x_max < args.x_min:
        print("error: empty sweep grid", file=sys.stderr)
        return 1
    xs = np.arange(args.x_min, args.x_max + 0.5 * args.x_step, args.x_step)
    if xs.size == 0:
        print("error: empty sweep grid", file=sys.stderr)
        return 1
    which = "eg1" if args.problem == "eg1-demo" else "eg2"
    rows = [(mu, float(x), smoothing_demo(which, float(x), mu, (args.a, args.b)))
            for mu in mus for x in xs]
    try:
        with open(args.output, "w", newline="") as fh:
            fh.write(f"# schema_version={SCHEMA_VERSION}\n")
            writer = csv.writer(fh)
            writer.writerow(["mu", "x", "r_mu"])
            for mu, x, val in rows:
                writer.writerow([_fmt(mu), _fmt(x), _fmt(val)])
        if not args.no_figures:
            from .figures import render_sweep
            render_sweep(rows, Path(args.output).with_suffix(".png"), which,
                         title=args.problem)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.problem}: wrote {len(rows)} rows to {args.output}")
    return 0


def cmd_reference(args) -> int:
    if args.problem not in REFERENCE_PROBLEMS:
        print(f"error: reference supports {', '.join(REFERENCE_PROBLEMS)}",
              file=sys.stderr)
        return 1
    ref = solve_extensive(args.problem, n_starts=args.starts, seed=args.seed)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "problem": ref.name,
        "objective": ref.objective,
        "x": [float(v) for v in ref.x],
        "y": [float(v) for v in ref.y] if ref.y is not None else None,
        "starts": args.starts,
        "seed": args.seed,
    }
    try:
        _write_json(payload, args.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.problem}: reference objective {ref.objective:.12g} -> {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bundlesqp",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run a benchmark problem")
    ps.add_argument("--problem", required=True, choices=REGISTRY)
    ps.add_argument("--mu", type=float, default=None,
                    help="smoothing penalty override (two-stage problems)")
    ps.add_argument("--alpha0", type=float, default=None)
    ps.add_argument("--eps", type=float, default=None)
    ps.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    ps.add_argument("--alpha-strategy", choices=ALPHA_STRATEGIES, default=None,
                    dest="alpha_strategy")
    ps.add_argument("--trace", default=None, help="trace CSV path")
    ps.add_argument("--report", default=None, help="report JSON path")
    ps.add_argument("--seed", type=int, default=7)
    ps.add_argument("--K", type=int, default=4, help="scenario count")
    ps.add_argument("--tie-break", choices=["+", "-"], default="+", dest="tie_break")
    ps.add_argument("--reference", default=None,
                    help="reference JSON (from the reference command) for the gap column")
    ps.add_argument("--no-figures", action="store_true")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("sweep", help="tabulate a smoothing demo")
    pw.add_argument("--problem", required=True)
    pw.add_argument("--mu", required=True, help="comma-separated penalty list")
    pw.add_argument("--x-min", type=float, required=True, dest="x_min")
    pw.add_argument("--x-max", type=float, required=True, dest="x_max")
    pw.add_argument("--x-step", type=float, required=True, dest="x_step")
    pw.add_argument("--a", type=float, default=1.0)
    pw.add_argument("--b", type=float, default=-1.0)
    pw.add_argument("--output", required=True)
    pw.add_argument("--no-figures", action="store_true")
    pw.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("reference", help="compute an extensive-form reference")
    pr.add_argument("--problem", required=True)
    pr.add_argument("--output", required=True)
    pr.add_argument("--starts", type=int, default=256)
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=cmd_reference)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
