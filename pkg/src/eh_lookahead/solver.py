"""
Energy-Harvesting Look-Ahead Model - Optimal Allocation Solver

Computes the optimal drought allocation xi^(N)* of the N-dimensional problem
and the infinite-horizon sequence xi* by shooting on xi_1: the KKT recursion

    (1-p) / (1 + gamma xi_{j+1}) = 1/(1 + gamma xi_j) - p / (1 + gamma R_j / w),
    R_j = B - sum_{i<=j} xi_i

is rolled forward from a guess and the trajectory's fate steers a bisection.

Forward shooting amplifies round-off by roughly the unstable eigenvalue of
the recursion per step (about 1.7 at p=0.3, w=4), so trajectories are carried
in mpmath at a precision sized to the horizon and returned as float64.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import mpmath
from scipy.optimize import minimize_scalar

from .core import (
    AllocationSequence,
    ParameterError,
    SolverError,
    SystemParams,
)
from .objective import (
    DEFAULT_TAIL_TOL,
    epsilon_N,
    eval_T_infinity,
    eval_T_N,
    kkt_residuals,
    offline_bound,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200
ORACLE_MAX_N = 4

# Decimal digits added on top of the horizon-driven precision
_GUARD_DIGITS = 20
# Above this many digit-steps an infinite-horizon solve takes minutes
SLOW_SOLVE_WORK = 1_000_000_000


class Shot(Enum):
    """Classification of a forward trajectory started from a guess of xi_1."""

    TOO_SMALL = "too_small"
    TOO_LARGE = "too_large"
    ON_TARGET = "on_target"


# ============================================================================
# RECURSION
# ============================================================================


class _Recurrence:
    """Forward map of the KKT recursion over a numeric type (float or mpf)."""

    def __init__(self, params: SystemParams, num=float):
        self.p = num(params.p)
        self.q = 1 - self.p
        self.gamma = num(params.gamma)
        self.gamma_w = self.gamma / params.window
        self.capacity = num(params.battery_capacity)
        self.window = params.window

    def step(self, xi_j, consumed):
        if consumed > self.capacity:
            return Shot.TOO_LARGE
        rhs = 1 / (1 + self.gamma * xi_j) - self.p / (
            1 + self.gamma_w * (self.capacity - consumed)
        )
        if rhs <= 0:
            return Shot.TOO_LARGE
        nxt = (self.q / rhs - 1) / self.gamma
        if nxt <= 0:
            return Shot.TOO_SMALL
        return nxt


def recursion_step(params: SystemParams, xi_j: float, consumed: float) -> float | Shot:
    """
    Next allocation xi_{j+1} from xi_j and the energy consumed through index j.

    Args:
        params: Model parameters
        xi_j: Current allocation (> 0)
        consumed: sum_{i<=j} xi_i, including xi_j

    Returns:
        xi_{j+1} > 0, or a Shot when no positive finite solution exists:
        TOO_LARGE if consumed > B or the right-hand side is <= 0,
        TOO_SMALL if the solution is <= 0.
    """
    if not xi_j > 0:
        raise ParameterError("xi_j", f"must be positive, got {xi_j!r}")
    return _Recurrence(params).step(xi_j, consumed)


def decay_rates(params: SystemParams) -> tuple[float, float]:
    """
    Eigenvalues (stable, unstable) of the recursion linearised at the origin.

    Near zero the recursion reads (1-p) xi_{j+1} = xi_j - p R_j / w with
    R_{j+1} = R_j - xi_{j+1}. The stable root is the asymptotic ratio
    xi*_{j+1} / xi*_j; the unstable root is the per-step error growth of
    forward shooting.
    """
    p = params.p
    w = params.window
    trace = 1.0 / (1.0 - p) + 1.0 + p / (w * (1.0 - p))
    det = 1.0 / (1.0 - p)
    root = math.sqrt(trace * trace - 4.0 * det)
    return (trace - root) / 2.0, (trace + root) / 2.0


def _growth_bound(params: SystemParams) -> float:
    """Trace of the linearised map; bounds the unstable eigenvalue."""
    p = params.p
    return 1.0 / (1.0 - p) + 1.0 + p / (params.window * (1.0 - p))


def _precision(params: SystemParams, horizon: int, tol: float) -> tuple[int, int]:
    """Working decimal digits and bisection iteration cap for a horizon."""
    digits = (
        math.ceil(horizon * math.log10(_growth_bound(params)))
        + math.ceil(-math.log10(tol))
        + _GUARD_DIGITS
    )
    bits = math.ceil(digits * math.log2(10.0))
    return digits, bits + 64


def horizon_cap(params: SystemParams, tol: float) -> int:
    """
    Longest trajectory rolled by the infinite-horizon shooting.

    Twice the larger of the eps_N truncation index and the number of steps
    the linearised residual needs to fall below tol.
    """
    n_eps = 1
    while epsilon_N(params, n_eps) >= tol:
        n_eps += 1
    stable, _ = decay_rates(params)
    n_lin = math.ceil(math.log(tol) / math.log(stable))
    return 2 * max(n_eps, n_lin)


def shooting_work(params: SystemParams, tol: float = DEFAULT_TOL) -> int:
    """
    Rough upper bound on the infinite-horizon solve's work, in digit-steps.

    Horizon cap times working digits times bisection iterations; the solve
    logs a warning above SLOW_SOLVE_WORK.
    """
    cap = horizon_cap(params, tol)
    digits, iterations = _precision(params, cap, tol)
    return cap * digits * iterations


# ============================================================================
# REPORTS
# ============================================================================


@dataclass(frozen=True, slots=True)
class SolverReport:
    """
    Result of a finite (horizon = N) or infinite (horizon = None) solve.

    `max_kkt_residual` is relative to the objective's gradient magnitude at
    xi = 0. `max_recursion_residual` is the worst absolute mismatch of the
    recursion over consecutive pairs of the returned float64 values.
    """

    xi: AllocationSequence
    horizon: int | None
    objective: float
    bisection_iterations: int
    bracket_width_final: float
    max_kkt_residual: float
    max_recursion_residual: float
    truncation_index: int
    precision_digits: int

    @property
    def infinite(self) -> bool:
        return self.horizon is None

    def to_record(self) -> dict[str, object]:
        return {
            "horizon": "inf" if self.horizon is None else self.horizon,
            "objective": self.objective,
            "residual": self.xi.residual,
            "truncation_index": self.truncation_index,
            "bisection_iterations": self.bisection_iterations,
            "bracket_width_final": self.bracket_width_final,
            "max_kkt_residual": self.max_kkt_residual,
            "max_recursion_residual": self.max_recursion_residual,
            "precision_digits": self.precision_digits,
        }


@dataclass(frozen=True, slots=True)
class StructureReport:
    """Structural checks of an allocation sequence, with worst margins."""

    all_positive: bool
    min_value: float
    strictly_decreasing: bool
    min_decrement: float
    below_residual_share: bool
    min_share_margin: float
    terminal_equality: bool | None
    terminal_gap: float | None
    residual_bound: bool | None
    residual_bound_margin: float | None

    @property
    def ok(self) -> bool:
        flags = (
            self.all_positive,
            self.strictly_decreasing,
            self.below_residual_share,
            self.terminal_equality,
            self.residual_bound,
        )
        return all(flag for flag in flags if flag is not None)

    def to_record(self) -> dict[str, object]:
        return {
            "all_positive": self.all_positive,
            "strictly_decreasing": self.strictly_decreasing,
            "below_residual_share": self.below_residual_share,
            "terminal_equality": self.terminal_equality,
            "residual_bound": self.residual_bound,
            "min_share_margin": self.min_share_margin,
        }


def recursion_residuals(params: SystemParams, xi: AllocationSequence) -> list[float]:
    """Mismatch of the recursion at each consecutive pair (j, j+1)."""
    p = params.p
    gamma = params.gamma
    gamma_w = gamma / params.window
    remaining = xi.residuals()
    out = []
    for j in range(len(xi) - 1):
        lhs = (1.0 - p) / (1.0 + gamma * xi[j + 1])
        rhs = 1.0 / (1.0 + gamma * xi[j]) - p / (1.0 + gamma_w * remaining[j])
        out.append(lhs - rhs)
    return out


def verify_structure(
    params: SystemParams,
    xi: AllocationSequence | Sequence[float],
    finite: bool = True,
    terminal_tol: float = 1e-10,
) -> StructureReport:
    """
    Check the structural properties of an optimal allocation.

    - every value positive
    - strictly decreasing
    - xi_j < R_j / w for j < N (every j for an infinite-horizon prefix)
    - finite case: xi_N = R_N / w within terminal_tol * B, and R_N < w B / N
    """
    xi = AllocationSequence.of(params, xi)
    values = xi.values
    n = len(values)
    capacity = params.battery_capacity
    w = params.window
    remaining = xi.residuals()

    min_value = min(values) if values else 0.0
    decrements = [values[j] - values[j + 1] for j in range(n - 1)]
    min_decrement = min(decrements) if decrements else math.inf
    checked = n - 1 if finite else n
    margins = [remaining[j] / w - values[j] for j in range(checked)]
    min_margin = min(margins) if margins else math.inf

    terminal_equality = terminal_gap = residual_bound = bound_margin = None
    if finite and n:
        terminal_gap = abs(values[-1] - xi.residual / w)
        terminal_equality = terminal_gap <= terminal_tol * capacity
        bound_margin = w * capacity / n - xi.residual
        residual_bound = bound_margin > 0.0

    return StructureReport(
        all_positive=bool(values) and min_value > 0.0,
        min_value=min_value,
        strictly_decreasing=min_decrement > 0.0,
        min_decrement=min_decrement,
        below_residual_share=min_margin > 0.0,
        min_share_margin=min_margin,
        terminal_equality=terminal_equality,
        terminal_gap=terminal_gap,
        residual_bound=residual_bound,
        residual_bound_margin=bound_margin,
    )


# ============================================================================
# SHOOTING
# ============================================================================


def _shoot_finite(rec: _Recurrence, xi1, n: int, target):
    """Roll n-1 steps from xi1; classify against the terminal identity."""
    values = [xi1]
    consumed = xi1
    if consumed >= rec.capacity:
        return Shot.TOO_LARGE, values
    for _ in range(n - 1):
        nxt = rec.step(values[-1], consumed)
        if isinstance(nxt, Shot):
            return nxt, values
        values.append(nxt)
        consumed += nxt
        if consumed >= rec.capacity:
            return Shot.TOO_LARGE, values
    gap = values[-1] - (rec.capacity - consumed) / rec.window
    if abs(gap) <= target:
        return Shot.ON_TARGET, values
    return (Shot.TOO_LARGE if gap > 0 else Shot.TOO_SMALL), values


def _shoot_infinite(rec: _Recurrence, xi1, cap: int, target):
    """
    Roll forward from xi1 until the trajectory diverges or reaches the cap.

    Returns the classification and the prefix up to the first index whose
    residual fell below `target` (None if it never did).
    """
    values = [xi1]
    consumed = xi1
    hit = None
    while True:
        remaining = rec.capacity - consumed
        if remaining <= 0 or values[-1] * rec.window >= remaining:
            return Shot.TOO_LARGE, hit
        if hit is None and remaining < target:
            hit = list(values)
        if len(values) >= cap:
            return (Shot.ON_TARGET if hit is not None else Shot.TOO_SMALL), hit
        nxt = rec.step(values[-1], consumed)
        if isinstance(nxt, Shot):
            return nxt, hit
        values.append(nxt)
        consumed += nxt


def _check_tol(tol: float) -> None:
    if not 0.0 < tol < 1.0:
        raise ParameterError("tol", f"must lie in (0, 1), got {tol!r}")


def solve_finite(
    params: SystemParams,
    N: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolverReport:
    """
    Maximizer xi^(N)* of T_N by bisection on xi_1 over (0, B).

    Each guess is rolled forward N-1 steps; the signed gap
    xi_N - (B - sum xi)/w increases with xi_1 and steers the bracket. The
    search stops once the bracket is narrower than tol * B and the terminal
    identity holds within tol * B.

    Raises:
        SolverError: if the iteration cap is reached
    """
    if N < 1:
        raise ParameterError("N", f"must be at least 1, got {N!r}")
    _check_tol(tol)
    digits, needed = _precision(params, N, tol)
    max_iter = max(max_iter, needed)
    logger.debug("solve_finite N=%d digits=%d max_iter=%d", N, digits, max_iter)

    with mpmath.workdps(digits):
        rec = _Recurrence(params, mpmath.mpf)
        width_tol = rec.capacity * tol
        lo = mpmath.mpf(0)
        hi = rec.capacity
        for iteration in range(1, max_iter + 1):
            mid = (lo + hi) / 2
            shot, values = _shoot_finite(rec, mid, N, width_tol)
            if shot is Shot.ON_TARGET and hi - lo < width_tol:
                break
            if shot is Shot.ON_TARGET:
                gap = values[-1] - (rec.capacity - mpmath.fsum(values)) / rec.window
                shot = Shot.TOO_LARGE if gap > 0 else Shot.TOO_SMALL
            if shot is Shot.TOO_LARGE:
                hi = mid
            else:
                lo = mid
        else:
            raise SolverError(
                f"finite-horizon shooting (N={N}) did not converge in {max_iter} iterations",
                (float(lo), float(hi)),
            )
        width = float(hi - lo)

    xi = AllocationSequence(tuple(float(v) for v in values), params.battery_capacity)
    report = SolverReport(
        xi=xi,
        horizon=N,
        objective=eval_T_N(params, xi),
        bisection_iterations=iteration,
        bracket_width_final=width,
        max_kkt_residual=kkt_residuals(params, xi).scaled_max_abs_residual,
        max_recursion_residual=max(
            (abs(r) for r in recursion_residuals(params, xi)), default=0.0
        ),
        truncation_index=N,
        precision_digits=digits,
    )
    logger.debug(
        "solve_finite N=%d converged after %d iterations, residual=%r",
        N,
        iteration,
        xi.residual,
    )
    return report


def solve_infinite(
    params: SystemParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> SolverReport:
    """
    Infinite-horizon optimal sequence xi*, truncated once its residual < tol * B.

    Bisection on xi_1: a trajectory that overspends or violates
    xi_j < R_j / w is too large, one that turns non-positive (or stalls at the
    horizon cap with residual >= tol * B) is too small. A guess is accepted
    only once its trajectory survives to the horizon cap.

    Round-off only has to stay below the current bracket width to classify a
    guess, so each shot runs at the digits the width needs; a surviving
    trajectory is re-rolled at the full horizon precision before it is
    accepted.

    Raises:
        SolverError: if the iteration cap is reached
    """
    _check_tol(tol)
    cap = horizon_cap(params, tol)
    digits, needed = _precision(params, cap, tol)
    max_iter = max(max_iter, needed)
    logger.debug(
        "solve_infinite cap=%d digits=%d max_iter=%d", cap, digits, max_iter
    )
    work = cap * digits * needed
    if work > SLOW_SOLVE_WORK:
        logger.warning(
            "solve_infinite p=%r w=%d: horizon cap %d at %d digits, this may take minutes",
            params.p,
            params.window,
            cap,
            digits,
        )

    with mpmath.workdps(digits):
        rec = _Recurrence(params, mpmath.mpf)
        target = rec.capacity * tol
        lo = mpmath.mpf(0)
        hi = rec.capacity
        for iteration in range(1, max_iter + 1):
            width_digits = int(mpmath.ceil(-mpmath.log10((hi - lo) / rec.capacity)))
            shot_digits = min(digits, max(width_digits, 0) + _GUARD_DIGITS)
            with mpmath.workdps(shot_digits):
                mid = (lo + hi) / 2
                shot, hit = _shoot_infinite(rec, mid, cap, target)
            if shot is Shot.ON_TARGET and shot_digits < digits:
                shot, hit = _shoot_infinite(rec, mid, cap, target)
            if shot is Shot.ON_TARGET:
                prefix = hit
                break
            if shot is Shot.TOO_LARGE:
                hi = mid
            else:
                lo = mid
        else:
            raise SolverError(
                f"infinite-horizon shooting did not converge in {max_iter} iterations",
                (float(lo), float(hi)),
            )
        width = float(hi - lo)

    xi = AllocationSequence(tuple(float(v) for v in prefix), params.battery_capacity)
    report = SolverReport(
        xi=xi,
        horizon=None,
        objective=eval_T_infinity(params, xi, tail_tol),
        bisection_iterations=iteration,
        bracket_width_final=width,
        max_kkt_residual=kkt_residuals(params, xi).scaled_max_abs_residual,
        max_recursion_residual=max(
            (abs(r) for r in recursion_residuals(params, xi)), default=0.0
        ),
        truncation_index=len(xi),
        precision_digits=digits,
    )
    logger.debug(
        "solve_infinite converged after %d iterations, K=%d residual=%r",
        iteration,
        len(xi),
        xi.residual,
    )
    return report


# ============================================================================
# ORACLE
# ============================================================================


def brute_force_oracle(
    params: SystemParams,
    N: int,
    tol: float = 1e-10,
    max_sweeps: int = 2000,
) -> AllocationSequence:
    """
    Independent maximizer of T_N by cyclic coordinate ascent.

    Each coordinate is optimised by a bounded scalar search over
    [0, B - sum of the others]; sweeps repeat until one full sweep raises the
    objective by less than tol (bits per slot). Strict concavity makes the
    fixed point the unique maximizer. Only meant for N <= 4.
    """
    if not 1 <= N <= ORACLE_MAX_N:
        raise ParameterError("N", f"oracle supports 1 <= N <= {ORACLE_MAX_N}, got {N!r}")
    if not tol > 0.0:
        raise ParameterError("tol", f"must be positive, got {tol!r}")

    capacity = params.battery_capacity
    x = [capacity / (params.window + N)] * N
    xatol = 1e-12 * capacity
    best = eval_T_N(params, AllocationSequence(tuple(x), capacity))

    for sweep in range(1, max_sweeps + 1):
        previous = best
        for j in range(N):
            others = math.fsum(x[:j] + x[j + 1 :])
            # one ulp below the free energy keeps the trial sum admissible
            upper = math.nextafter(max(capacity - others, 0.0), 0.0)

            def negative(t: float, j: int = j, upper: float = upper) -> float:
                trial = list(x)
                trial[j] = min(max(t, 0.0), upper)
                return -eval_T_N(params, AllocationSequence(tuple(trial), capacity))

            res = minimize_scalar(
                negative, bounds=(0.0, upper), method="bounded", options={"xatol": xatol}
            )
            if -float(res.fun) >= best:
                x[j] = min(max(float(res.x), 0.0), upper)
                best = -float(res.fun)
        if best - previous < tol:
            logger.debug("oracle N=%d converged after %d sweeps", N, sweep)
            break
    else:
        raise SolverError(f"coordinate ascent (N={N}) did not converge in {max_sweeps} sweeps")

    return AllocationSequence(tuple(x), capacity)


# ============================================================================
# WINDOW SWEEP
# ============================================================================


@dataclass(frozen=True, slots=True)
class SweepRow:
    """One window size of the throughput-versus-window curve."""

    window: int
    gamma_star: float
    offline: float

    @property
    def relative_gap(self) -> float:
        return (self.offline - self.gamma_star) / self.offline

    def to_record(self) -> dict[str, object]:
        return {
            "w": self.window,
            "gamma_star": self.gamma_star,
            "offline_bound": self.offline,
            "relative_gap": self.relative_gap,
        }


def _sweep_row(args: tuple[SystemParams, float, float]) -> SweepRow:
    params, tol, tail_tol = args
    try:
        report = solve_infinite(params, tol=tol, tail_tol=tail_tol)
    except SolverError as e:
        raise SolverError(f"window={params.window}: {e}", e.bracket) from e
    return SweepRow(params.window, report.objective, offline_bound(params, tail_tol))


def solve_sweep(
    params: SystemParams,
    windows: Iterable[int],
    tol: float = DEFAULT_TOL,
    tail_tol: float = DEFAULT_TAIL_TOL,
    workers: int = 1,
) -> list[SweepRow]:
    """
    Optimal throughput for each window size, in the order given.

    Rows are independent; with workers > 1 they are solved in a process pool.
    """
    jobs = [(replace(params, window=w), tol, tail_tol) for w in windows]
    if not jobs:
        raise ParameterError("windows", "must not be empty")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(job) for job in jobs]
