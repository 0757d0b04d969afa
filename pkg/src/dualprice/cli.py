"""Command-line front end.

    dualprice solve      --spec FILE [--grid-step H] [--grid-min A] [--grid-max B] [--nodes N]
    dualprice verify     --spec FILE [--solution CSV]
    dualprice simulate   --spec FILE --I0 X [--paths N] [--seed S] [--trace]
    dualprice thresholds --spec FILE
    dualprice unified    --spec FILE
    dualprice figure2

``--spec`` accepts a TOML file or the name of a bundled instance
(``example1``, the default).  Artifacts go to ``--out`` (default ``.``).
Exit codes: 0 ok, 1 invalid input, 2 solver did not converge, 3 a check failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config
from .dp import (
    DEFAULT_STEP,
    InventoryGrid,
    OptimizerError,
    artifact_header,
    from_csv,
    policy_at,
    solve,
    spec_hash,
    to_csv,
    to_json,
)
from .model import validate
from .quadrature import DEFAULT_NODES

log = logging.getLogger("dualprice")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_CHECKS = 0, 1, 2, 3

FIG2_RANGE = (-4.0, 6.0, 0.05)


class InputError(Exception):
    pass


def load_spec(ref: str | None):
    ref = ref or "example1"
    path = Path(ref)
    try:
        if path.exists():
            return config.load(path)
        return config.loads(config.bundled(ref))
    except FileNotFoundError:
        raise InputError(f"no spec file or bundled instance named {ref!r}") from None
    except config.ConfigError as exc:
        raise InputError(f"{ref}: {exc}") from None


def build_grid(spec, args) -> InventoryGrid:
    step = args.grid_step if args.grid_step is not None else DEFAULT_STEP
    base = InventoryGrid.default(spec, step)
    lo = args.grid_min if args.grid_min is not None else base.I_min
    hi = args.grid_max if args.grid_max is not None else base.I_max
    try:
        return InventoryGrid(lo, hi, step)
    except ValueError as exc:
        raise InputError(f"bad grid: {exc}") from None


def settings(args, grid: InventoryGrid) -> dict:
    return {"grid": {"I_min": grid.lo, "I_max": grid.hi, "step": grid.step},
            "n_nodes": args.nodes}


def prepare(args):
    spec = load_spec(args.spec)
    rep = validate(spec)
    if not rep.ok:
        raise InputError(f"invalid problem spec:\n{rep}")
    for line in rep.marginal:
        log.warning("marginal: %s", line)
    return spec, build_grid(spec, args)


def obtain_solution(spec, grid, args):
    if getattr(args, "solution", None):
        try:
            text = Path(args.solution).read_text(encoding="utf-8")
            return from_csv(text, spec, args.nodes)
        except (OSError, UnicodeDecodeError, ValueError) as exc:
            raise InputError(f"cannot read solution {args.solution}: {exc}") from None
    return solve(spec, grid, n_nodes=args.nodes)


def out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def dump_json(path: Path, obj):
    write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def threshold_rows(sol):
    from .structure import ThresholdError, find_thresholds

    if not sol.spec.multiplicative_only:
        return None, "thresholds are defined for multiplicative noise only"
    try:
        return find_thresholds(sol), None
    except ThresholdError as exc:
        return None, str(exc)


def print_thresholds(rep, note):
    if rep is None:
        print(f"thresholds: {note}")
        return
    for p in rep.periods:
        s = "none" if p.I_s_star is None else f"{p.I_s_star:.4f}"
        l_ = "closed" if p.I_l_star is None else f"{p.I_l_star:.4f}"
        print(f"t={p.t}  I*_s={s}  I*_l={l_}  first={p.preference}")


# -- commands ---------------------------------------------------------------------


def cmd_solve(args) -> int:
    spec, grid = prepare(args)
    sol = solve(spec, grid, n_nodes=args.nodes)
    d = out_dir(args)
    write(d / "policy.csv", to_csv(sol))
    rep, note = threshold_rows(sol)
    extra = {"thresholds": [p.as_dict() for p in rep.periods] if rep else note}
    dump_json(d / "summary.json", to_json(sol, extra))
    print_thresholds(rep, note)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import report_json, run_battery, summary

    spec, grid = prepare(args)
    sol = obtain_solution(spec, grid, args)
    results = run_battery(spec, sol)
    counts = summary(results)
    d = out_dir(args)
    dump_json(d / "report.json", {"spec_sha256": spec_hash(spec), "summary": counts,
                                  "checks": report_json(results)})
    for r in results:
        line = f"{r.status.upper():4}  {r.check_id}"
        if r.status == "skip":
            line += f"  ({r.reason})"
        print(line)
    print(f"{counts['pass']} passed, {counts['fail']} failed, {counts['skip']} skipped")
    return EXIT_CHECKS if counts["fail"] else EXIT_OK


def cmd_simulate(args) -> int:
    from .simulator import GridEscapeWarning, simulate_paths, solution_policy, summarize, trace_csv

    spec, grid = prepare(args)
    sol = obtain_solution(spec, grid, args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GridEscapeWarning)
        profits, final_I, rows = simulate_paths(spec, solution_policy(sol), args.I0, args.paths,
                                                args.seed, args.mode, sol, trace=args.trace)
    escapes = [str(w.message) for w in caught if issubclass(w.category, GridEscapeWarning)]
    for msg in escapes:
        log.warning("grid escape: %s", msg)
    stats = summarize(profits, final_I)
    d = out_dir(args)
    sett = {**settings(args, sol.grid), "I0": args.I0, "paths": args.paths, "seed": args.seed,
            "mode": args.mode}
    dump_json(d / "simstats.json", {"spec_sha256": spec_hash(spec), "settings": sett,
                                    "stats": stats.as_dict(), "grid_escapes": escapes})
    if args.trace:
        write(d / "trace.csv", artifact_header(spec, sett) + trace_csv(rows))
    print(f"mean={stats.mean_profit:.6f}  se={stats.std_error:.6f}  n={stats.n_paths}  "
          f"terminal_backlog_rate={stats.terminal_backlog_rate:.4f}")
    return EXIT_OK


def cmd_thresholds(args) -> int:
    spec, grid = prepare(args)
    sol = obtain_solution(spec, grid, args)
    rep, note = threshold_rows(sol)
    d = out_dir(args)
    dump_json(d / "thresholds.json", {"spec_sha256": spec_hash(spec),
                                      "settings": settings(args, sol.grid),
                                      "thresholds": [p.as_dict() for p in rep.periods] if rep
                                      else note})
    print_thresholds(rep, note)
    return EXIT_OK if rep else EXIT_INPUT


def cmd_unified(args) -> int:
    from .structure import HypothesisMismatch, solve_unified

    spec, grid = prepare(args)
    try:
        uni = solve_unified(spec, grid, args.nodes)
    except HypothesisMismatch as exc:
        raise InputError(f"shared pricing not applicable: {exc}") from None
    buf = io.StringIO()
    buf.write(artifact_header(spec, settings(args, grid)))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "I", "V", "p_u", "u"])
    for t in range(1, spec.T + 1):
        for k, I in enumerate(grid.points):
            w.writerow([t, _f(I), _f(uni.V[t - 1, k]), _f(uni.p_u[t - 1, k]), _f(uni.u[t - 1, k])])
    d = out_dir(args)
    write(d / "unified.csv", buf.getvalue())
    dump_json(d / "unified.json", {"spec_sha256": spec_hash(spec), "I_u_star": uni.I_u_star,
                                   "p_max": uni.p_max, "betas": uni.betas})
    for t, Iu in enumerate(uni.I_u_star, start=1):
        print(f"t={t}  I^u*={'none' if Iu is None else f'{Iu:.4f}'}")
    return EXIT_OK


def cmd_figure2(args) -> int:
    args.spec = "example1"
    spec, grid = prepare(args)
    lo, hi, h = FIG2_RANGE
    if grid.lo > lo or grid.hi < hi:
        raise InputError(f"grid [{grid.lo}, {grid.hi}] must cover [{lo}, {hi}]")
    sol = solve(spec, grid, n_nodes=args.nodes)
    I = np.round(np.arange(int(round((hi - lo) / h)) + 1) * h + lo, 10)
    ds, dl = policy_at(sol, 1, I)
    buf = io.StringIO()
    buf.write(artifact_header(spec, settings(args, grid)))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["I", "d_s_star", "d_l_star"])
    for row in zip(I, ds, dl):
        w.writerow([_f(x) for x in row])
    write(out_dir(args) / "figure2.csv", buf.getvalue())
    k13, k14 = np.argmin(np.abs(I + 1.3)), np.argmin(np.abs(I + 1.4))
    print(f"d*_l,1(-1.3)={dl[k13]:.4f}  d*_l,1(-1.4)={dl[k14]:.4f}")
    return EXIT_OK


def _f(x) -> str:
    return repr(round(float(x), 10))


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="TOML problem file or bundled instance name")
    common.add_argument("--grid-step", type=float, help=f"inventory grid step (default {DEFAULT_STEP})")
    common.add_argument("--grid-min", type=float, help="lowest inventory level on the grid")
    common.add_argument("--grid-max", type=float, help="highest inventory level on the grid")
    common.add_argument("--nodes", type=int, default=DEFAULT_NODES, help="quadrature nodes per noise")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dualprice", description="Dual-market dynamic pricing solver")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve and write value/policy tables")
    pv = sub.add_parser("verify", parents=[common], help="run the structural check battery")
    pv.add_argument("--solution", help="policy CSV written by `solve` (skips solving)")
    ps = sub.add_parser("simulate", parents=[common], help="Monte Carlo replay of the policy")
    ps.add_argument("--I0", type=float, default=0.0, help="starting inventory")
    ps.add_argument("--paths", type=int, default=10_000)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--mode", choices=("expectation", "realized"), default="expectation")
    ps.add_argument("--trace", action="store_true", help="write per-path trace.csv")
    ps.add_argument("--solution", help="policy CSV written by `solve` (skips solving)")
    pt = sub.add_parser("thresholds", parents=[common], help="market opening levels per period")
    pt.add_argument("--solution", help="policy CSV written by `solve` (skips solving)")
    sub.add_parser("unified", parents=[common], help="solve with one shared price")
    sub.add_parser("figure2", parents=[common], help="t=1 policy of the bundled example")
    return p


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "thresholds": cmd_thresholds,
    "unified": cmd_unified,
    "figure2": cmd_figure2,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.nodes < 1:
        print("error: --nodes must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OptimizerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
