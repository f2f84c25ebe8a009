"""Command-line front end: ``seq``, ``par``, ``bounds``, ``sweep`` and ``verify``.

Modes are 1-based on the command line. Output is CSV (stdout unless ``--out``).
A ``key=value`` file given with ``--config`` may stand in for any flag;
explicit flags win.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import ProblemShape, bounds_report
from .errors import (
    InfeasibleMachineError,
    InvalidProblemError,
    MttkrpError,
    PlanningError,
    ShapeError,
)
from .memmodel import CSV_HEADER, MemoryMachine
from .parsim import ATOMIC, KRP, ProcessorGrid, comm_words_formula, par_general_mttkrp
from .planner import (
    GENERAL,
    STATIONARY,
    MM_MODELS,
    SweepSpec,
    choose_block_size,
    choose_grid,
    fig3_spec,
    scaling_sweep,
    sweep_csv,
)
from .sequential import block_fits, min_unblocked_capacity, mttkrp_seq_blocked, mttkrp_seq_unblocked
from .tensor import load_problem, mttkrp_oracle, parse_dims, parse_synthetic, synthetic_problem

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 2, 3, 4
REL_TOL = 1e-12


class ConfigError(Exception):
    pass


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config(path: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


# --- parser ----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--config", help="key=value file supplying defaults for any flag")


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--synthetic", metavar="SPEC", help="d1,...,dN:R[@seed]")
    p.add_argument("--input", metavar="PATH", help="problem file")
    p.add_argument("--mode", type=int, default=1, help="output mode, 1-based (default 1)")
    p.add_argument("--verify", action="store_true", help="compare with the brute-force oracle")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mttkrp-comm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("seq", help="sequential two-level-memory run")
    _add_common(p)
    _add_source(p)
    p.add_argument("--M", type=int, help="fast-memory capacity in words")
    p.add_argument("--b", type=int, help="block size (default: largest feasible)")
    p.add_argument("--alg", choices=("blocked", "unblocked"), default="blocked")
    p.add_argument("--warm-start", action="store_true", help="waive the first and last M words")
    p.add_argument("-N", type=int, dest="N", help="tensor order (feasibility check without a problem)")

    p = sub.add_parser("par", help="simulated parallel run")
    _add_common(p)
    _add_source(p)
    p.add_argument("--grid", help="P0xP1x...xPN")
    p.add_argument("--P", type=int, help="processor count; grid chosen by the planner")
    p.add_argument("--alg", choices=(STATIONARY, GENERAL), default=GENERAL)
    p.add_argument("--arith", choices=(ATOMIC, KRP), default=ATOMIC)
    p.add_argument("--summary-only", action="store_true", help="omit the per-processor rows")

    p = sub.add_parser("bounds", help="lower-bound report")
    _add_common(p)
    p.add_argument("-N", type=int, dest="N", help="tensor order")
    p.add_argument("--dims", help="I1,...,IN | I1xI2x... | I^N | single I_k with -N")
    p.add_argument("--I", type=int, dest="I", help="total size of a cubical tensor (with -N)")
    p.add_argument("--R", type=int, required=False)
    p.add_argument("--M", type=int)
    p.add_argument("--P", type=int)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)

    p = sub.add_parser("sweep", help="analytic strong-scaling sweep")
    _add_common(p)
    p.add_argument("--fig3", action="store_true", help="I=2^45 (2^15 cubed), R=2^15, P=2^0..2^30")
    p.add_argument("--dims")
    p.add_argument("--R", type=int)
    p.add_argument("--mode", type=int, default=1)
    p.add_argument("--P", help="comma list of processor counts, or lo..hi for powers of two exponents")
    p.add_argument("--mm-model", choices=sorted(MM_MODELS), default="carma")

    p = sub.add_parser("verify", help="run every algorithm on a problem and check it against the oracle")
    _add_common(p)
    p.add_argument("--synthetic", metavar="SPEC")
    p.add_argument("--input", metavar="PATH")
    p.add_argument("--mode", type=int, default=1)
    p.add_argument("--M", type=int, help="fast-memory capacity for the sequential runs")
    p.add_argument("--grid", help="grid for the parallel runs (default: planner, P=8)")
    return parser


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in cfg.items():
        if key not in known or key in ("help", "config"):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _bool(value)
        else:
            defaults[key] = value  # argparse applies `type` to string defaults
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- helpers ---------------------------------------------------------------------

def _source(args) -> str | None:
    if args.synthetic and args.input:
        raise ConfigError("give exactly one of --synthetic and --input")
    if args.synthetic:
        return args.synthetic if args.synthetic.startswith("synthetic:") else "synthetic:" + args.synthetic
    return args.input


def _problem(args):
    src = _source(args)
    if src is None:
        raise ConfigError("no problem source: give --synthetic or --input")
    if args.mode < 1:
        raise ConfigError(f"--mode is 1-based, got {args.mode}")
    if src.startswith("synthetic:"):
        spec = parse_synthetic(src)
        if args.mode > len(spec.dims):
            raise ConfigError(f"--mode {args.mode} exceeds tensor order {len(spec.dims)}")
        label = f"synthetic:{'x'.join(map(str, spec.dims))}:{spec.rank}@{spec.seed}"
        return synthetic_problem(spec.dims, spec.rank, args.mode - 1, spec.seed), label
    return load_problem(src, args.mode - 1), src


def _rel_err(got: np.ndarray, ref: np.ndarray) -> float:
    scale = np.max(np.abs(ref)) if ref.size else 0.0
    err = np.max(np.abs(got - ref)) if ref.size else 0.0
    return float(err / scale) if scale > 0 else float(err)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# --- commands --------------------------------------------------------------------

def cmd_seq(args) -> int:
    if args.M is None:
        raise ConfigError("seq needs --M")
    src = _source(args)
    if src is None:
        if args.N is None:
            raise ConfigError("no problem source: give --synthetic or --input")
        N = args.N
    else:
        problem, label = _problem(args)
        N = problem.order
        if args.N is not None and args.N != N:
            raise ConfigError(f"-N {args.N} disagrees with the problem order {N}")

    if args.alg == "unblocked":
        if args.M < min_unblocked_capacity(N):
            raise InfeasibleMachineError(f"unblocked MTTKRP needs M >= N+2 = {N + 2}, got M={args.M}")
        b = ""
    else:
        b = args.b if args.b is not None else choose_block_size(N, args.M)
        if not block_fits(N, b, args.M):
            raise InfeasibleMachineError(f"b={b} violates b^N + N*b <= M={args.M}")
    if src is None:
        raise ConfigError("machine is feasible but there is no problem: give --synthetic or --input")

    machine = MemoryMachine(args.M, warm_start=args.warm_start)
    if args.alg == "unblocked":
        B, ledger = mttkrp_seq_unblocked(problem, machine)
    else:
        B, ledger = mttkrp_seq_blocked(problem, machine, b)

    verdict, status = "", EXIT_OK
    if args.verify:
        ref = mttkrp_oracle(problem)
        ok = np.array_equal(B, ref) if args.alg == "unblocked" else _rel_err(B, ref) <= REL_TOL
        verdict = f"{'pass' if ok else 'fail'}:{_rel_err(B, ref):.3e}"
        status = EXIT_OK if ok else EXIT_VERIFY
    head = CSV_HEADER + ",words,peak,mode,source,warm_start,verify"
    row = ledger.csv_row(args.alg, problem.dims, problem.rank, args.M, b)
    row += f",{ledger.words},{machine.peak},{args.mode},{label},{int(args.warm_start)},{verdict}"
    _emit(args, head + "\n" + row + "\n")
    return status


PAR_HEADER = "alg,arith,N,dims,R,mode,grid,P,max_words,formula_words,mean_words,max_received,max_storage,gamma,delta,source,verify"


def cmd_par(args) -> int:
    problem, label = _problem(args)
    if args.grid and args.P:
        raise ConfigError("give --grid or --P, not both")
    if args.grid:
        grid = ProcessorGrid.parse(args.grid)
    elif args.P:
        grid = choose_grid(problem.dims, problem.rank, problem.mode, args.P, args.alg)
    else:
        raise ConfigError("par needs --grid or --P")
    if len(grid.dims) != problem.order:
        raise ConfigError(f"grid {grid} has {len(grid.dims)} tensor dimensions, problem has {problem.order}")
    if args.alg == STATIONARY and grid.p0 != 1:
        raise PlanningError(f"stationary algorithm needs P0 = 1, grid is {grid}")

    res = par_general_mttkrp(problem, grid, args.arith)
    led = res.ledger
    gamma, delta = res.distribution.balance()
    verdict, status = "", EXIT_OK
    if args.verify:
        err = _rel_err(res.B, mttkrp_oracle(problem))
        verdict = f"{'pass' if err <= REL_TOL else 'fail'}:{err:.3e}"
        status = EXIT_OK if err <= REL_TOL else EXIT_VERIFY
    dims = "x".join(map(str, problem.dims))
    formula = comm_words_formula(problem.dims, problem.rank, problem.mode, grid)
    lines = [PAR_HEADER]
    lines.append(",".join(map(str, (
        args.alg, args.arith, problem.order, dims, problem.rank, args.mode, grid, grid.P,
        led.max_words, formula, repr(led.mean_words), led.max_received, max(led.storage),
        repr(gamma), repr(delta), label, verdict,
    ))))
    if not args.summary_only:
        lines.append("proc,coords,sent,received,words,nary,flops,storage")
        for i, p in enumerate(res.distribution.procs):
            coords = "x".join(map(str, p))
            lines.append(",".join(map(str, (
                i, coords, led.words_sent[i], led.words_received[i], led.words(i),
                led.nary_multiplies[i], led.flops[i], led.storage[i],
            ))))
    _emit(args, "\n".join(lines) + "\n")
    return status


def _bounds_dims(args) -> tuple[int, ...]:
    if args.dims and args.I:
        raise ConfigError("give --dims or --I, not both")
    if args.I is not None:
        if args.N is None:
            raise ConfigError("--I needs -N")
        side = round(args.I ** (1.0 / args.N))
        if side**args.N != args.I:
            raise ConfigError(f"--I {args.I} is not a perfect {args.N}-th power")
        return (side,) * args.N
    if not args.dims:
        raise ConfigError("bounds needs --dims or --I")
    try:
        dims = parse_dims(args.dims)
    except InvalidProblemError as exc:
        raise ConfigError(str(exc)) from exc
    if args.N is not None:
        if len(dims) == 1:
            dims = dims * args.N
        elif len(dims) != args.N:
            raise ConfigError(f"-N {args.N} disagrees with --dims {args.dims}")
    return dims


def cmd_bounds(args) -> int:
    if args.R is None:
        raise ConfigError("bounds needs --R")
    try:
        shape = ProblemShape(_bounds_dims(args), args.R, args.M, args.P, args.gamma, args.delta)
    except ShapeError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(args, bounds_report(shape).to_csv())
    return EXIT_OK


def _parse_Ps(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = (int(t) for t in text.split(".."))
        return tuple(2**e for e in range(lo, hi + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


def cmd_sweep(args) -> int:
    if args.fig3:
        spec = fig3_spec(args.out, args.mm_model)
    else:
        if not (args.dims and args.R and args.P):
            raise ConfigError("sweep needs --fig3 or all of --dims, --R, --P")
        dims = parse_dims(args.dims)
        if not 1 <= args.mode <= len(dims):
            raise ConfigError(f"--mode {args.mode} out of range")
        spec = SweepSpec(dims, args.R, _parse_Ps(args.P), args.mode - 1, args.mm_model, args.out)
    rows = scaling_sweep(spec)
    _emit(args, sweep_csv(rows))
    return EXIT_OK


def cmd_verify(args) -> int:
    problem, label = _problem(args)
    ref = mttkrp_oracle(problem)
    N, R = problem.order, problem.rank
    M = args.M if args.M is not None else max(N + 2, 2**N + N * 2)
    grid = ProcessorGrid.parse(args.grid) if args.grid else None
    if grid is None:
        P = min(8, math.prod(problem.dims))
        grid = choose_grid(problem.dims, R, problem.mode, P, GENERAL)
    stat_grid = ProcessorGrid(grid.dims, 1)

    runs = []
    B1, _ = mttkrp_seq_unblocked(problem, MemoryMachine(M))
    runs.append(("unblocked", B1, np.array_equal(B1, ref)))
    B2, _ = mttkrp_seq_blocked(problem, MemoryMachine(M), choose_block_size(N, M))
    runs.append(("blocked", B2, None))
    runs.append(("stationary", par_general_mttkrp(problem, stat_grid).B, None))
    runs.append(("general", par_general_mttkrp(problem, grid).B, None))
    runs.append(("general-krp", par_general_mttkrp(problem, grid, KRP).B, None))

    lines = ["alg,source,mode,M,grid,rel_err,ok"]
    all_ok = True
    for name, B, exact in runs:
        err = _rel_err(B, ref)
        ok = exact if exact is not None else err <= REL_TOL
        all_ok &= bool(ok)
        g = "" if name in ("unblocked", "blocked") else (stat_grid if name == "stationary" else grid)
        lines.append(f"{name},{label},{args.mode},{M},{g},{err:.3e},{int(bool(ok))}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK if all_ok else EXIT_VERIFY


COMMANDS = {"seq": cmd_seq, "par": cmd_par, "bounds": cmd_bounds, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except (InfeasibleMachineError, PlanningError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, MttkrpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
