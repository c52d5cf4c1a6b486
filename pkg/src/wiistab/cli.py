"""Command-line front end.

Exit codes::

    0  feasible / search succeeded / all reproduced rows within tolerance
    1  infeasible / not stable / diverged / some row outside tolerance
    2  inconclusive solver verdict
    3  usage or configuration error
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import BUNDLED, ConfigError, load_config
from .dde import Divergence, HistoryUnderflow, decay_envelope, simulate, write_csv
from .lmi import build_corollary41, build_theorem41, build_theorem42, variable_count
from .sdp import SolverSettings, Verdict, check_feasible, export_sdpa
from .search import (
    DEFAULT_ALPHA_TOL,
    DEFAULT_DELAY_TOL,
    AmbiguousFeasibility,
    NonMonotoneFeasibility,
    NotStable,
    feasible_delay_interval,
    max_decay_rate,
    max_upper_delay,
)
from .systems import DelaySpec

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3

_VERDICT_EXIT = {Verdict.FEASIBLE: EXIT_OK, Verdict.INFEASIBLE: EXIT_INFEASIBLE, Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}

log = logging.getLogger("wiistab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(report: dict, path: str | None = None) -> None:
    text = json.dumps(report, indent=2, default=float)
    print(text)
    if path:
        Path(path).write_text(text + "\n")


def _with_delay_overrides(system, args):
    if system.kind == "constant":
        if args.h2 is not None or args.h1 is not None:
            raise UsageError("--h1/--h2 apply to interval systems; use --h")
        return system.with_delay(args.h) if args.h is not None else system
    if args.h is not None:
        raise UsageError("--h applies to constant-delay systems; use --h1/--h2")
    return system.with_bounds(h1=args.h1, h2=args.h2)


def _settings(args) -> SolverSettings:
    return SolverSettings() if args.variable_bound is None else SolverSettings(variable_bound=args.variable_bound)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    system = _with_delay_overrides(cfg.system, args)
    theorem = args.theorem or cfg.analysis.get("theorem") or ("thm41" if system.kind == "constant" else "thm42")
    alpha = args.alpha if args.alpha is not None else cfg.analysis.get("alpha")
    if theorem in ("thm41", "thm42") and alpha is None:
        raise UsageError(f"{theorem} needs --alpha (or analysis.alpha in the config)")
    try:
        if theorem == "thm41":
            problem = build_theorem41(system, float(alpha), args.epsilon)
        elif theorem == "thm42":
            problem = build_theorem42(system, float(alpha), args.epsilon)
        else:
            problem = build_corollary41(system, args.epsilon)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if args.export_sdpa:
        Path(args.export_sdpa).write_text(export_sdpa(problem))
    start = time.perf_counter()
    res = check_feasible(problem, _settings(args))
    wall = time.perf_counter() - start
    report = {
        "config": cfg.name or str(args.config),
        "theorem": theorem,
        "alpha": None if theorem == "cor41" else float(alpha),
        "delay": {k: problem.metadata[k] for k in ("h", "h1", "h2") if k in problem.metadata},
        "verdict": res.verdict.value,
        "margin": res.margin,
        "t_opt": res.t_opt,
        "epsilon": problem.epsilon,
        "variables": variable_count(problem),
        "wall_time": wall,
        "solver": res.solver_stats,
    }
    if args.json:
        _emit(report)
    else:
        print(f"verdict: {res.verdict.value}")
        print(f"margin: {res.margin:.6g}")
        print(f"variables: {report['variables']}")
        print(f"wall_time: {wall:.3f} s")
    return _VERDICT_EXIT[res.verdict]


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    system = _with_delay_overrides(cfg.system, args)
    settings = _settings(args)
    try:
        if args.mode == "decay":
            theorem = args.theorem or ("thm41" if system.kind == "constant" else "thm42")
            tol = args.tol if args.tol is not None else DEFAULT_ALPHA_TOL
            res = max_decay_rate(system, theorem, alpha_hi=args.alpha_hi, tol=tol, settings=settings)
            report = res.to_dict()
            report["theorem"] = theorem
            _emit(report, args.report)
            return EXIT_OK if res.stable else EXIT_INFEASIBLE
        tol = args.tol if args.tol is not None else DEFAULT_DELAY_TOL
        if args.mode == "h2":
            h1 = args.h1 if args.h1 is not None else system.h1
            h2_hi = args.h2_hi if args.h2_hi is not None else float(cfg.analysis.get("h2_hi", 6.0))
            res = max_upper_delay(system, h1, h2_hi, tol=tol, settings=settings)
            _emit(res.to_dict(), args.report)
            return EXIT_OK
        alpha = args.alpha if args.alpha is not None else cfg.analysis.get("alpha")
        if alpha is None:
            raise UsageError("interval mode needs --alpha (or analysis.alpha in the config)")
        h_range = args.h_range or cfg.analysis.get("h_range") or [0.0, 2 * system.h]
        iv = feasible_delay_interval(system, float(alpha), tuple(h_range), tol=tol, settings=settings)
        _emit(iv.to_dict(), args.report)
        return EXIT_OK
    except NotStable as exc:
        _emit({"mode": args.mode, "result": None, "error": "not stable", "detail": str(exc), **exc.report}, args.report)
        return EXIT_INFEASIBLE
    except (NonMonotoneFeasibility, AmbiguousFeasibility) as exc:
        _emit({"mode": args.mode, "result": None, "error": type(exc).__name__, "detail": str(exc), "grid": exc.grid}, args.report)
        return EXIT_INCONCLUSIVE
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    system = _with_delay_overrides(cfg.system, args)
    sim = cfg.simulation
    phi = args.phi or sim.get("phi")
    if phi is None:
        raise UsageError("no initial function: pass --phi or set simulation.phi")
    T = args.T if args.T is not None else float(sim.get("T", 10.0))
    step = args.step if args.step is not None else float(sim.get("step", 1e-3))
    sigma = args.sigma if args.sigma is not None else sim.get("sigma")
    delay = None
    if args.profile is not None:
        delay = DelaySpec(*args.profile)
    try:
        traj = simulate(system, delay, phi, T, step)
    except Divergence as exc:
        print(json.dumps({"error": "diverged", "detail": str(exc), "last_time": exc.last_time}))
        return EXIT_INFEASIBLE
    except HistoryUnderflow as exc:
        raise UsageError(str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    report: dict = {"config": cfg.name, "T": T, "step": step, "points": int(traj.times.size)}
    if sigma is not None:
        sup, t_sup = decay_envelope(traj, float(sigma))
        report.update(sigma=float(sigma), envelope_sup=sup, envelope_argmax=t_sup)
    if args.out:
        write_csv(args.out, traj, None if sigma is None else float(sigma), stride=args.stride)
        report["csv"] = str(args.out)
        if not args.no_figure:
            from .plotting import plot_trajectory

            fig = plot_trajectory(traj, Path(args.out).with_suffix(".png"), None if sigma is None else float(sigma), cfg.name)
            report["figure"] = str(fig)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _print_table(rep) -> None:
    print(f"# table {rep.key}: {rep.title} (tolerance {rep.tolerance:g})")
    print(f"{rep.parameter:>8} {'reference':>10} {'computed':>10} {'|delta|':>10}  ok")
    for r in rep.rows:
        got = "-" if r["computed"] is None else f"{r['computed']:.4f}"
        dlt = "-" if r["delta"] is None else f"{r['delta']:.4f}"
        print(f"{r[rep.parameter]!s:>8} {r['reference']:>10.4f} {got:>10} {dlt:>10}  {'yes' if r['within_tolerance'] else 'NO'}")
    for name, ok in rep.checks.items():
        print(f"check {name}: {'yes' if ok else 'NO'}")
    print(f"wall_time: {rep.wall_time:.1f} s")


def cmd_reproduce(args) -> int:
    from .reproduce import run_table

    key = args.table or args.example
    rep = run_table(key, alpha_tol=args.alpha_tol, delay_tol=args.delay_tol, jobs=args.jobs)
    _print_table(rep)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"table-{key}"
        (out / f"{stem}.json").write_text(json.dumps(rep.to_dict(), indent=2, default=float) + "\n")
        with open(out / f"{stem}.csv", "w") as fh:
            fh.write(f"{rep.parameter},reference,computed,delta,within_tolerance\n")
            for r in rep.rows:
                fh.write(f"{r[rep.parameter]},{r['reference']},{r['computed']},{r['delta']},{r['within_tolerance']}\n")
        if not args.no_figure:
            from .plotting import plot_table

            plot_table(rep.rows, out / f"{stem}.png", rep.parameter, rep.quantity, rep.title)
    return EXIT_OK if rep.passed else EXIT_INFEASIBLE


def _add_delay_overrides(p):
    p.add_argument("--h", type=float, help="constant delay (overrides the config)")
    p.add_argument("--h1", type=float, help="lower delay bound (overrides the config)")
    p.add_argument("--h2", type=float, help="upper delay bound (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wiistab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cfg_help = f"JSON config path or a bundled name ({', '.join(BUNDLED)})"

    p = sub.add_parser("analyze", help="single feasibility check")
    p.add_argument("config", help=cfg_help)
    p.add_argument("--theorem", choices=["thm41", "thm42", "cor41"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float, help="strictness margin (default scales with the system)")
    p.add_argument("--variable-bound", type=float)
    p.add_argument("--export-sdpa", metavar="PATH")
    p.add_argument("--json", action="store_true", help="print the full JSON report")
    _add_delay_overrides(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("search", help="bisection for decay rate, upper delay or delay interval")
    p.add_argument("config", help=cfg_help)
    p.add_argument("--mode", choices=["decay", "h2", "interval"], required=True)
    p.add_argument("--theorem", choices=["thm41", "thm42"])
    p.add_argument("--tol", type=float)
    p.add_argument("--alpha", type=float, help="decay parameter for interval mode")
    p.add_argument("--alpha-hi", type=float, default=2.0)
    p.add_argument("--h2-hi", type=float)
    p.add_argument("--h-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--variable-bound", type=float)
    p.add_argument("--report", metavar="PATH", help="also write the JSON report here")
    _add_delay_overrides(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("simulate", help="integrate the delay equation and report the decay envelope")
    p.add_argument("config", help=cfg_help)
    p.add_argument("--sigma", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--phi", type=float, nargs="+", help="constant initial function")
    p.add_argument("--profile", type=float, nargs=2, metavar=("C0", "C1"), help="h(t) = C0 + C1 |sin t|")
    p.add_argument("--out", metavar="CSV")
    p.add_argument("--stride", type=int, default=1, help="write every STRIDE-th grid point")
    p.add_argument("--no-figure", action="store_true")
    _add_delay_overrides(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="recompute a reference table")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--table", choices=["1", "3", "4"])
    g.add_argument("--example", choices=["5.1"])
    p.add_argument("--alpha-tol", type=float, default=DEFAULT_ALPHA_TOL)
    p.add_argument("--delay-tol", type=float, default=DEFAULT_DELAY_TOL)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", metavar="DIR", help="write JSON, CSV and a figure here")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"wiistab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
