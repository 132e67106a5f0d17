"""Command-line entry point: ``lcwra {fit,solve,baseline,sweep,reproduce}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import throughput_fairness, time_fairness
from .dcp import solve_dcp
from .errors import (ConvergenceError, DegenerateScenarioError, EligibilityError,
                     InfeasibleError, InputError, LcwraError, SolverError,
                     UnsupportedStructureError, ValidationError)
from .fitcurve import FitConfig, fit_power_law
from .ranking import solve_ranking
from .serialization import (RunReport, allocation_csv, builtin_names, builtin_path, read_curve_points,
                            read_json, scenario_from_dict, scenario_to_dict, validate)
from .sim import SweepConfig, load_sweep, reproduce_fixed, run_sweep

EXIT_OK, EXIT_INPUT, EXIT_INELIGIBLE, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4, 5
METHODS = ("ranking", "dcp", "time-fair", "throughput-fair")
log = logging.getLogger("lcwra")


def _resolve(path_or_name: str) -> Path:
    p = Path(path_or_name)
    if p.is_file():
        return p
    try:
        return builtin_path(path_or_name)
    except FileNotFoundError:
        raise InputError(f"{path_or_name}: no such file or built-in "
                         f"(built-ins: {', '.join(builtin_names())})") from None


def _write(path, text: str):
    Path(path).write_text(text)


def _emit_report(args, report: RunReport):
    payload = report.to_dict()
    validate(RunReport.from_json(report.to_json()).to_dict(), "report")
    if args.out:
        _write(args.out, report.to_json() + "\n")
    return payload


def cmd_fit(args) -> int:
    points = read_curve_points(_resolve(args.csv))
    cfg = FitConfig(tol=args.tol, max_iter=args.max_iter, multi_start=args.multi_start, seed=args.seed)
    t0 = time.perf_counter()
    res = fit_power_law(points, cfg)
    elapsed = time.perf_counter() - t0
    print(f"a={res.a:.6g} b={res.b:.6g} sse={res.residual_sse:.6g} iterations={res.iterations}")
    _emit_report(args, RunReport(sys.argv[1:] if args.argv is None else args.argv,
                                 {"csv": str(args.csv), "tol": args.tol, "max_iter": args.max_iter,
                                  "multi_start": args.multi_start},
                                 {"fit": res.to_dict()}, timings={"fit_s": elapsed}, seed=args.seed))
    return EXIT_OK


def _load_scenario(args):
    d = read_json(_resolve(args.scenario))
    if "parameter" in d and "base" in d:
        raise InputError(f"{args.scenario} is a sweep configuration; use 'lcwra sweep'")
    rng = np.random.default_rng(args.seed)
    return scenario_from_dict(d, rng=rng)


def _allocate(args, method: str):
    sc = _load_scenario(args)
    t0 = time.perf_counter()
    traces = {}
    if method == "ranking":
        alloc, trace = solve_ranking(sc, args.epsilon)
        traces["bisection"] = trace.to_dict()
    elif method == "dcp":
        alloc, trace = solve_dcp(sc, args.outer_tol, args.max_outer)
        traces["dcp"] = trace.to_dict()
    elif method == "time-fair":
        alloc = time_fairness(sc)
    else:
        alloc = throughput_fairness(sc)
    elapsed = time.perf_counter() - t0
    text = allocation_csv(sc, alloc)
    if args.csv:
        _write(args.csv, text)
    else:
        sys.stdout.write(text)
    print(f"# objective={alloc.objective:.10g}", file=sys.stderr)
    config = {"scenario": scenario_to_dict(sc), "method": method, "epsilon": args.epsilon,
              "outer_tol": args.outer_tol, "max_outer": args.max_outer}
    _emit_report(args, RunReport(sys.argv[1:] if args.argv is None else args.argv, config,
                                 {"allocation": alloc.to_dict()}, traces,
                                 {"solve_s": elapsed}, seed=args.seed))
    return EXIT_OK


def cmd_solve(args) -> int:
    return _allocate(args, args.method)


def cmd_baseline(args) -> int:
    return _allocate(args, args.scheme)


def _sweep_config(args) -> SweepConfig:
    cfg = load_sweep(_resolve(args.config))
    over = cfg.to_dict()
    if args.seed is not None:
        over["seed"] = args.seed
    if args.runs is not None:
        over["runs"] = args.runs
    over["max_outer"] = args.max_outer
    over["outer_tol"] = args.outer_tol
    over["epsilon"] = args.epsilon
    return SweepConfig.from_dict(over)


def _run_sweep_cmd(args, cfg: SweepConfig) -> int:
    t0 = time.perf_counter()
    summary = run_sweep(cfg, workers=args.workers)
    elapsed = time.perf_counter() - t0
    text = summary.to_csv()
    if args.csv:
        _write(args.csv, text)
    else:
        sys.stdout.write(text)
    _emit_report(args, RunReport(sys.argv[1:] if args.argv is None else args.argv, cfg.to_dict(),
                                 {"summary": summary.to_dict()}, timings={"sweep_s": elapsed},
                                 seed=cfg.seed))
    return EXIT_OK


def cmd_sweep(args) -> int:
    return _run_sweep_cmd(args, _sweep_config(args))


def cmd_reproduce(args) -> int:
    if args.config in builtin_names() and "parameter" not in read_json(builtin_path(args.config)):
        t0 = time.perf_counter()
        rep = reproduce_fixed(args.config, args.epsilon)
        elapsed = time.perf_counter() - t0
        tasks = list(rep["lcwra"]["samples"])
        lines = ["scheme," + ",".join(f"t_{u}_s" for u in rep["lcwra"]["time_s"]) + ","
                 + ",".join(f"samples_{t}" for t in tasks) + ",objective"]
        for name, r in rep.items():
            lines.append(",".join([name] + [f"{v:.6g}" for v in r["time_s"].values()]
                                  + [str(r["samples"][t]) for t in tasks] + [f"{r['objective']:.10g}"]))
        text = "\n".join(lines) + "\n"
        if args.csv:
            _write(args.csv, text)
        else:
            sys.stdout.write(text)
        _emit_report(args, RunReport(sys.argv[1:] if args.argv is None else args.argv,
                                     {"name": args.config}, {args.config: rep},
                                     timings={"solve_s": elapsed}, seed=args.seed))
        return EXIT_OK
    if args.config not in builtin_names():
        raise InputError(f"unknown experiment {args.config!r}; valid names: {', '.join(builtin_names())}")
    return cmd_sweep(args)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lcwra", description="Learning-centric wireless resource allocation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default, help="seed for random channels")
        sp.add_argument("--out", help="write a JSON run report here")
        sp.add_argument("--csv", help="write the CSV table here instead of stdout")
        sp.add_argument("--epsilon", type=float, default=1e-9, help="bisection tolerance")
        sp.add_argument("--outer-tol", type=float, default=1e-6, help="DCP relative-change tolerance")
        sp.add_argument("--max-outer", type=int, default=100, help="DCP outer iteration cap")

    sp = sub.add_parser("fit", help="fit err = a v^-b to a 'v,err' CSV")
    sp.add_argument("csv", help="CSV path or bundled name (cnn_points.csv, svm_points.csv)")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--multi-start", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write a JSON run report here")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("solve", help="allocate time and energy for a scenario")
    sp.add_argument("scenario", help="scenario JSON path or built-in name")
    sp.add_argument("--method", choices=METHODS, default="dcp")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("baseline", help="run a fairness baseline")
    sp.add_argument("scenario")
    sp.add_argument("--scheme", choices=METHODS[2:], default="time-fair")
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    for name, func, help_ in (("sweep", cmd_sweep, "run a Monte-Carlo sweep"),
                              ("reproduce", cmd_reproduce, "run a bundled experiment")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="built-in name (fig2a, fig2b, k4_vs_k6, vehicular) or sweep JSON")
        common(sp, seed_default=None)
        sp.add_argument("--runs", type=int, help="override the Monte-Carlo run count")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc.filename or exc}: file not found", file=sys.stderr)
        return EXIT_INPUT
    except (EligibilityError, UnsupportedStructureError) as exc:
        print(f"error: ranking method not applicable: {exc}", file=sys.stderr)
        return EXIT_INELIGIBLE
    except (InfeasibleError, DegenerateScenarioError) as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, ConvergenceError, ValidationError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, LcwraError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
