"""
Energy-Harvesting Look-Ahead Model - Monte Carlo Simulator

Runs the look-ahead policy over seeded Bernoulli arrival traces and estimates
the long-run throughput with renewal-cycle error bars, for comparison with
the analytic throughput T_inf.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .core import (
    PRNG_NAME,
    AllocationSequence,
    ArrivalTrace,
    ParameterError,
    SystemParams,
)
from .objective import DEFAULT_TAIL_TOL, eval_T_infinity
from .output import open_output, write_records
from .policy import DEFAULT_DRAIN_FLOOR, PolicyState, step

logger = logging.getLogger(__name__)

DEFAULT_SLOTS = 1_000_000
DEFAULT_SEED = 20190101


def generate_arrivals(params: SystemParams, slots: int, seed: int) -> ArrivalTrace:
    """i.i.d. Bernoulli(p) arrivals E_1..E_T, reproducible from the seed."""
    return ArrivalTrace.generate(params.p, slots, seed)


# ============================================================================
# REPORTS
# ============================================================================


@dataclass(frozen=True, slots=True)
class ThroughputReport:
    """
    Single-seed estimate of the long-run throughput.

    `std_error` is the regenerative ratio estimator over complete renewal
    cycles; `z_score` = (simulated_mean - analytic) / std_error.
    """

    simulated_mean: float
    std_error: float
    slots: int
    analytic: float
    z_score: float
    cycle_count: int
    mean_cycle_length: float
    seed: int
    prng: str
    initial_battery: float
    cycle_lengths: np.ndarray = field(repr=False, compare=False)

    def to_record(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "prng": self.prng,
            "slots": self.slots,
            "initial_battery": self.initial_battery,
            "simulated_mean": self.simulated_mean,
            "std_error": self.std_error,
            "analytic": self.analytic,
            "z_score": self.z_score,
            "cycle_count": self.cycle_count,
            "mean_cycle_length": self.mean_cycle_length,
        }


@dataclass(frozen=True, slots=True)
class ComparisonReport:
    """Per-seed reports plus the pooled estimate over equal-length runs."""

    reports: tuple[ThroughputReport, ...]
    pooled_mean: float
    pooled_std_error: float
    analytic: float
    pooled_z_score: float

    def to_record(self) -> dict[str, object]:
        return {
            "seeds": len(self.reports),
            "slots": self.reports[0].slots,
            "pooled_mean": self.pooled_mean,
            "pooled_std_error": self.pooled_std_error,
            "analytic": self.analytic,
            "pooled_z_score": self.pooled_z_score,
        }

    def records(self) -> list[dict[str, object]]:
        """Per-seed rows followed by the pooled row."""
        rows = [{"kind": "seed", **r.to_record()} for r in self.reports]
        rows.append({"kind": "pooled", **self.to_record()})
        return rows


@dataclass(frozen=True, slots=True)
class SlotRecord:
    """One line of the per-slot trace dump."""

    slot: int
    arrival: bool
    distance: int
    action: float
    battery: float
    reward: float

    def to_record(self) -> dict[str, object]:
        return {
            "slot": self.slot,
            "arrival": self.arrival,
            "distance": self.distance,
            "action": self.action,
            "battery": self.battery,
            "reward": self.reward,
        }


def write_trace(path: str | Path, records: Sequence[SlotRecord], fmt: str = "text") -> None:
    with open_output(path) as f:
        write_records((r.to_record() for r in records), f, fmt)


# ============================================================================
# STATISTICS
# ============================================================================


def _regenerative_std_error(
    rewards: np.ndarray, cycle_rewards: np.ndarray, cycle_lengths: np.ndarray
) -> float:
    n = cycle_lengths.size
    if n >= 2:
        ratio = cycle_rewards.sum() / cycle_lengths.sum()
        deviations = cycle_rewards - ratio * cycle_lengths
        spread = math.sqrt(float(np.sum(deviations**2)) / (n - 1))
        se = spread / (float(cycle_lengths.mean()) * math.sqrt(n))
    elif rewards.size > 1:
        se = float(rewards.std(ddof=1)) / math.sqrt(rewards.size)
    else:
        se = 0.0
    if se == 0.0:
        se = math.ulp(max(abs(float(rewards.mean())), 1.0))
    return se


@dataclass(frozen=True, slots=True)
class ChiSquareResult:
    statistic: float
    pvalue: float
    bins: int

    def to_record(self) -> dict[str, object]:
        return {"chi2": self.statistic, "pvalue": self.pvalue, "bins": self.bins}


def cycle_length_chisquare(
    lengths: ThroughputReport | np.ndarray | Sequence[int], p: float, max_k: int = 20
) -> ChiSquareResult:
    """
    Goodness of fit of cycle lengths to Geometric(p) on {1, 2, ...}.

    Bins are k = 1..max_k plus one bin for k > max_k. Accepts a report
    directly, in which case its complete cycles are tested.
    """
    if isinstance(lengths, ThroughputReport):
        lengths = lengths.cycle_lengths
    lengths = np.asarray(lengths, dtype=np.int64)
    n = lengths.size
    if n < 1:
        raise ParameterError("lengths", "need at least one complete cycle")
    counts = np.bincount(np.minimum(lengths, max_k + 1), minlength=max_k + 2)[1:]
    k = np.arange(1, max_k + 1)
    probs = np.append(p * (1.0 - p) ** (k - 1), (1.0 - p) ** max_k)
    expected = probs / probs.sum() * n
    result = stats.chisquare(counts, expected)
    return ChiSquareResult(float(result.statistic), float(result.pvalue), max_k + 1)


# ============================================================================
# SIMULATION
# ============================================================================


def simulate(
    params: SystemParams,
    xi: AllocationSequence,
    slots: int = DEFAULT_SLOTS,
    seed: int = DEFAULT_SEED,
    initial_battery: float | None = None,
    trace_path: str | Path | None = None,
    analytic: float | None = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    drain_floor: float = DEFAULT_DRAIN_FLOOR,
) -> ThroughputReport:
    """
    Run the policy for `slots` slots and estimate its long-run throughput.

    Args:
        params: Model parameters
        xi: Drought allocation used by the policy
        slots: Horizon T
        seed: PCG64 seed of the arrival trace
        initial_battery: Battery before E_1 is applied (default B)
        trace_path: Optional per-slot trace dump
        analytic: Reference throughput; computed with eval_T_infinity when None
        tail_tol: Truncation tolerance of the analytic value
        drain_floor: See policy.action

    Returns:
        ThroughputReport
    """
    xi = AllocationSequence.of(params, xi)
    capacity = params.battery_capacity
    start = capacity if initial_battery is None else float(initial_battery)
    if not 0.0 <= start <= capacity:
        raise ParameterError(
            "initial_battery", f"must lie in [0, {capacity!r}], got {start!r}"
        )
    if analytic is None:
        analytic = eval_T_infinity(params, xi, tail_tol)

    trace = generate_arrivals(params, slots, seed)
    w = params.window
    # padded[t] = E_{t+1}; zeros past the end of the trace
    padded = np.zeros(slots + w + 1, dtype=bool)
    padded[:slots] = trace.arrivals
    future = padded.tolist()

    level = min(start + (capacity if future[0] else 0.0), capacity)
    state = PolicyState.initial(params, future[1 : 1 + w], level)
    logger.info(
        "simulating %d slots seed=%d window=%d initial_battery=%r", slots, seed, w, start
    )

    rewards = np.empty(slots)
    slot_records: list[SlotRecord] = []
    for t in range(1, slots + 1):
        before = state
        state, spent, earned = step(
            state, params, xi, future[t + w], future[t], drain_floor
        )
        rewards[t - 1] = earned
        if trace_path is not None:
            slot_records.append(
                SlotRecord(t, future[t - 1], before.distance, spent, before.battery, earned)
            )

    # Regeneration slots (0-based): every arrival after slot 1, and slot 1 if full
    regen = np.flatnonzero(trace.arrivals[1:]) + 1
    if level == capacity:
        regen = np.concatenate(([0], regen))
    if regen.size >= 2:
        cycle_lengths = np.diff(regen)
        cycle_rewards = np.add.reduceat(rewards, regen)[:-1]
    else:
        cycle_lengths = np.empty(0, dtype=np.int64)
        cycle_rewards = np.empty(0)

    mean = float(rewards.mean())
    se = _regenerative_std_error(rewards, cycle_rewards, cycle_lengths)
    report = ThroughputReport(
        simulated_mean=mean,
        std_error=se,
        slots=slots,
        analytic=analytic,
        z_score=(mean - analytic) / se,
        cycle_count=int(cycle_lengths.size),
        mean_cycle_length=float(cycle_lengths.mean()) if cycle_lengths.size else math.nan,
        seed=seed,
        prng=PRNG_NAME,
        initial_battery=start,
        cycle_lengths=cycle_lengths,
    )
    if trace_path is not None:
        write_trace(trace_path, slot_records)
        logger.info("wrote %d trace records to %s", len(slot_records), trace_path)
    logger.info(
        "seed=%d mean=%r se=%r z=%r", seed, report.simulated_mean, se, report.z_score
    )
    return report


def _simulate_job(args: tuple) -> ThroughputReport:
    params, xi, slots, seed, initial_battery, analytic, drain_floor = args
    return simulate(
        params,
        xi,
        slots,
        seed,
        initial_battery=initial_battery,
        analytic=analytic,
        drain_floor=drain_floor,
    )


def compare(
    params: SystemParams,
    xi: AllocationSequence,
    slots: int,
    seeds: Sequence[int],
    workers: int = 1,
    initial_battery: float | None = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    drain_floor: float = DEFAULT_DRAIN_FLOOR,
) -> ComparisonReport:
    """
    Independent replications over several seeds, pooled.

    The pooled mean is the mean of the per-seed means and its standard error
    is sqrt(sum se_i^2) / n. Reports come back in seed order whatever the
    number of workers.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ParameterError("seeds", f"need at least 2 seeds, got {len(seeds)}")
    xi = AllocationSequence.of(params, xi)
    analytic = eval_T_infinity(params, xi, tail_tol)
    jobs = [
        (params, xi, slots, seed, initial_battery, analytic, drain_floor) for seed in seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = tuple(pool.map(_simulate_job, jobs))
    else:
        reports = tuple(_simulate_job(job) for job in jobs)

    n = len(reports)
    pooled_mean = math.fsum(r.simulated_mean for r in reports) / n
    pooled_se = math.sqrt(math.fsum(r.std_error**2 for r in reports)) / n
    return ComparisonReport(
        reports=reports,
        pooled_mean=pooled_mean,
        pooled_std_error=pooled_se,
        analytic=analytic,
        pooled_z_score=(pooled_mean - analytic) / pooled_se,
    )
