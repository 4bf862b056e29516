"""Command-line interface for eh-lookahead."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass

from . import __version__
from .core import (
    AllocationSequence,
    ModelError,
    ParameterError,
    SolverError,
    SystemParams,
    validate_params,
)
from .objective import (
    DEFAULT_TAIL_TOL,
    epsilon_N,
    eval_T_infinity,
    eval_T_N,
    offline_bound,
    renewal_throughput,
)
from .output import FORMATS, open_output, write_records
from .simulator import DEFAULT_SEED, DEFAULT_SLOTS, compare, simulate
from .solver import (
    DEFAULT_TOL,
    SolverReport,
    solve_finite,
    solve_infinite,
    solve_sweep,
    verify_structure,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_CHECK = 3

DEFAULT_WINDOWS = tuple(range(1, 11))
DEFAULT_N_LIST = (5, 10, 15, 20)
DEFAULT_Z_THRESHOLD = 3.0


def _eprint(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_int_list(value: str) -> tuple[int, ...]:
    """Accept "1,2,3" or a range "1-10"."""
    try:
        if "-" in value and "," not in value:
            lo, hi = (int(v) for v in value.split("-", 1))
            items = tuple(range(lo, hi + 1))
        else:
            items = tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected integers, got {value!r}") from e
    if not items:
        raise argparse.ArgumentTypeError("list must not be empty")
    return items


def _parse_float_list(value: str) -> tuple[float, ...]:
    try:
        items = tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected numbers, got {value!r}") from e
    if not items:
        raise argparse.ArgumentTypeError("list must not be empty")
    return items


# ============================================================================
# RUN CONFIG
# ============================================================================


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Everything one invocation needs, assembled from the parsed arguments."""

    command: str
    params: SystemParams
    tol: float = DEFAULT_TOL
    tail_tol: float = DEFAULT_TAIL_TOL
    finite_n: int | None = None
    xi: tuple[float, ...] | None = None
    slots: int = DEFAULT_SLOTS
    seeds: tuple[int, ...] = (DEFAULT_SEED,)
    initial_battery: float | None = None
    check: bool = False
    z_threshold: float = DEFAULT_Z_THRESHOLD
    trace: str | None = None
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    n_list: tuple[int, ...] = DEFAULT_N_LIST
    workers: int = 1
    out: str | None = None
    fmt: str = "text"

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        window = getattr(args, "window", None)
        windows = getattr(args, "windows", None) or DEFAULT_WINDOWS
        params = validate_params(
            {
                "p": args.p,
                "gamma": args.gamma,
                "battery_capacity": args.B,
                "window": window if window is not None else windows[0],
            }
        )
        seeds = getattr(args, "seeds", None) or (getattr(args, "seed", DEFAULT_SEED),)
        return cls(
            command=args.command,
            params=params,
            tol=args.tol,
            tail_tol=args.tail_tol,
            finite_n=getattr(args, "finite_N", None),
            xi=getattr(args, "xi", None),
            slots=getattr(args, "T", DEFAULT_SLOTS),
            seeds=tuple(seeds),
            initial_battery=getattr(args, "initial_battery", None),
            check=getattr(args, "check", False),
            z_threshold=getattr(args, "z_threshold", DEFAULT_Z_THRESHOLD),
            trace=getattr(args, "trace", None),
            windows=tuple(windows),
            n_list=tuple(getattr(args, "N_list", None) or DEFAULT_N_LIST),
            workers=getattr(args, "workers", 1),
            out=args.out,
            fmt=args.format,
        )


def _solve(config: RunConfig) -> SolverReport:
    if config.finite_n is not None:
        return solve_finite(config.params, config.finite_n, tol=config.tol)
    return solve_infinite(config.params, tol=config.tol, tail_tol=config.tail_tol)


def _allocation(config: RunConfig) -> AllocationSequence:
    if config.xi is not None:
        return AllocationSequence.of(config.params, config.xi)
    return _solve(config).xi


def _emit(config: RunConfig, records: list[dict[str, object]]) -> None:
    with open_output(config.out) as f:
        write_records(records, f, config.fmt)


# ============================================================================
# COMMANDS
# ============================================================================


def cmd_solve(config: RunConfig) -> int:
    report = _solve(config)
    structure = verify_structure(
        config.params, report.xi, finite=report.horizon is not None
    )
    remaining = report.xi.residuals()
    records = [{"kind": "summary", **report.to_record(), **structure.to_record()}]
    records.extend(
        {"kind": "xi", "j": j, "xi": value, "residual": float(remaining[j - 1])}
        for j, value in enumerate(report.xi.values, start=1)
    )
    _emit(config, records)
    if config.check and not structure.ok:
        _eprint("check failed: allocation violates its structural properties")
        return EXIT_CHECK
    return EXIT_OK


def cmd_eval(config: RunConfig) -> int:
    params = config.params
    xi = _allocation(config)
    finite = config.xi is not None or config.finite_n is not None
    record: dict[str, object] = {
        "n": len(xi),
        "residual": xi.residual,
        "t_infinity": eval_T_infinity(params, xi, config.tail_tol),
        "t_n": eval_T_N(params, xi) if finite else None,
        "epsilon_n": epsilon_N(params, len(xi)),
        "renewal_throughput": renewal_throughput(params, xi, config.tail_tol),
        "offline_bound": offline_bound(params, config.tail_tol),
    }
    _emit(config, [record])
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    params = config.params
    if config.trace is not None and len(config.seeds) > 1:
        raise ParameterError("trace", "a slot trace needs a single seed")
    xi = _allocation(config)
    if len(config.seeds) > 1:
        result = compare(
            params,
            xi,
            config.slots,
            config.seeds,
            workers=config.workers,
            initial_battery=config.initial_battery,
            tail_tol=config.tail_tol,
        )
        records = result.records()
        z = result.pooled_z_score
    else:
        report = simulate(
            params,
            xi,
            config.slots,
            config.seeds[0],
            initial_battery=config.initial_battery,
            trace_path=config.trace,
            tail_tol=config.tail_tol,
        )
        records = [report.to_record()]
        z = report.z_score
    _emit(config, records)
    if config.check and not abs(z) <= config.z_threshold:
        _eprint(f"check failed: |z|={abs(z)!r} exceeds {config.z_threshold!r}")
        return EXIT_CHECK
    return EXIT_OK


def cmd_sweep_window(config: RunConfig) -> int:
    rows = solve_sweep(
        config.params,
        config.windows,
        tol=config.tol,
        tail_tol=config.tail_tol,
        workers=config.workers,
    )
    _emit(config, [row.to_record() for row in rows])
    return EXIT_OK


def _table_column(config: RunConfig, n: int | None) -> tuple[float, ...]:
    try:
        if n is None:
            report = solve_infinite(config.params, tol=config.tol, tail_tol=config.tail_tol)
        else:
            report = solve_finite(config.params, n, tol=config.tol)
    except SolverError as e:
        raise SolverError(f"N={'inf' if n is None else n}: {e}", e.bracket) from e
    return report.xi.values


def cmd_xi_table(config: RunConfig) -> int:
    columns = {f"xi_n{n}": _table_column(config, n) for n in config.n_list}
    columns["xi_inf"] = _table_column(config, None)
    depth = max(len(values) for values in columns.values())
    records = []
    for j in range(1, depth + 1):
        row: dict[str, object] = {"j": j}
        for name, values in columns.items():
            row[name] = values[j - 1] if j <= len(values) else None
        records.append(row)
    _emit(config, records)
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "sweep-window": cmd_sweep_window,
    "xi-table": cmd_xi_table,
}


# ============================================================================
# PARSER
# ============================================================================


def _add_common(p: argparse.ArgumentParser, window: bool = True) -> None:
    p.add_argument("-p", type=float, required=True, help="Arrival probability (0 < p < 1)")
    p.add_argument("-g", "--gamma", type=float, required=True, help="Channel gain")
    p.add_argument("-B", type=float, required=True, help="Battery capacity")
    if window:
        p.add_argument("-w", "--window", type=int, required=True, help="Look-ahead window")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="Solver tolerance (relative to B)")
    p.add_argument(
        "--tail-tol", type=float, default=DEFAULT_TAIL_TOL, help="Series truncation tolerance"
    )
    p.add_argument("--format", choices=FORMATS, default="text", help="Output format")
    p.add_argument("--out", help="Output file (default stdout)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="More logging")


def _add_allocation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--finite-N", type=int, help="Use the N-dimensional optimum")
    p.add_argument("--xi", type=_parse_float_list, help="Comma-separated allocation")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eh-lookahead")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="Compute the optimal drought allocation")
    _add_common(p_solve)
    p_solve.add_argument("--finite-N", type=int, help="Solve the N-dimensional problem")
    p_solve.add_argument(
        "--check", action="store_true", help="Exit 3 if a structural property fails"
    )

    p_eval = sub.add_parser("eval", help="Evaluate throughput functionals")
    _add_common(p_eval)
    _add_allocation(p_eval)

    p_sim = sub.add_parser("simulate", help="Monte Carlo run of the policy")
    _add_common(p_sim)
    _add_allocation(p_sim)
    p_sim.add_argument("-T", type=int, default=DEFAULT_SLOTS, help="Slots per run")
    seed_group = p_sim.add_mutually_exclusive_group()
    seed_group.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Arrival seed")
    seed_group.add_argument("--seeds", type=_parse_int_list, help="Several seeds, pooled")
    p_sim.add_argument("--initial-battery", type=float, help="Battery before slot 1")
    p_sim.add_argument("--check", action="store_true", help="Exit 3 if |z| > threshold")
    p_sim.add_argument("--z-threshold", type=float, default=DEFAULT_Z_THRESHOLD)
    p_sim.add_argument("--trace", help="Per-slot trace file (single seed only)")
    p_sim.add_argument("--workers", type=int, default=1, help="Processes for --seeds")

    p_sweep = sub.add_parser("sweep-window", help="Optimal throughput versus window size")
    _add_common(p_sweep, window=False)
    p_sweep.add_argument(
        "--windows", type=_parse_int_list, default=DEFAULT_WINDOWS, help="e.g. 1-10"
    )
    p_sweep.add_argument("--workers", type=int, default=1, help="Processes")

    p_table = sub.add_parser("xi-table", help="xi^(N)* for several N next to xi*")
    _add_common(p_table)
    p_table.add_argument(
        "--N-list", type=_parse_int_list, default=DEFAULT_N_LIST, help="e.g. 5,10,15,20"
    )

    return p


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("eh_lookahead").setLevel(level)


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse already printed usage; --help and --version exit 0
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    _configure_logging(args.verbose)
    handler = _COMMANDS[args.command]
    try:
        config = RunConfig.from_args(args)
        return int(handler(config))
    except ModelError as e:
        _eprint(f"error kind={type(e).__name__} field={e.field} message={e}")
        return EXIT_DOMAIN
    except OSError as e:
        _eprint(f"error kind={type(e).__name__} field=path message={e}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
