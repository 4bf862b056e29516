from __future__ import annotations

import math

import numpy as np
import pytest

from eh_lookahead.core import PRNG_NAME, AllocationSequence, ParameterError, PolicyError
from eh_lookahead.objective import eval_T_infinity
from eh_lookahead.output import parse_text
from eh_lookahead.simulator import (
    compare,
    cycle_length_chisquare,
    generate_arrivals,
    simulate,
)

B = 100.0


# ============================================================================
# ARRIVALS
# ============================================================================


def test_generate_arrivals_is_reproducible(fig_params):
    a = generate_arrivals(fig_params, 10_000, seed=42)
    assert a == generate_arrivals(fig_params, 10_000, seed=42)
    assert a.p == fig_params.p


def test_generate_arrivals_frequency(fig_params):
    trace = generate_arrivals(fig_params, 1_000_000, seed=42)
    assert abs(trace.frequency() - 0.3) <= 3 * math.sqrt(0.21 / 1e6)


# ============================================================================
# SHORT RUNS
# ============================================================================


def test_short_run_report_fields(fig_params, xi_star):
    report = simulate(fig_params, xi_star, slots=20_000, seed=5)
    assert report.slots == 20_000
    assert report.std_error > 0.0
    assert report.z_score == (report.simulated_mean - report.analytic) / report.std_error
    assert report.analytic == eval_T_infinity(fig_params, xi_star)
    assert report.cycle_count == report.cycle_lengths.size
    assert report.mean_cycle_length == pytest.approx(1 / 0.3, rel=0.05)
    assert report.prng == PRNG_NAME
    assert report.initial_battery == B


def test_tiny_run_has_wide_error(fig_params, xi_star):
    report = simulate(fig_params, xi_star, slots=10, seed=1)
    assert report.std_error > 0.0
    assert math.isfinite(report.z_score)


def test_single_slot_run(fig_params, xi_star):
    report = simulate(fig_params, xi_star, slots=1, seed=1)
    assert report.std_error > 0.0


def test_same_seed_same_report(fig_params, xi_star):
    a = simulate(fig_params, xi_star, slots=5000, seed=9)
    b = simulate(fig_params, xi_star, slots=5000, seed=9)
    assert a == b
    assert np.array_equal(a.cycle_lengths, b.cycle_lengths)


def test_rejects_bad_initial_battery(fig_params, xi_star):
    with pytest.raises(ParameterError) as excinfo:
        simulate(fig_params, xi_star, slots=10, seed=1, initial_battery=B + 1)
    assert excinfo.value.field == "initial_battery"


def test_undrained_prefix_fails_on_long_drought(fig_params):
    xi = AllocationSequence((20.0,), B)
    with pytest.raises(PolicyError):
        simulate(fig_params, xi, slots=5000, seed=3)


def test_trace_dump(fig_params, xi_star, tmp_path):
    path = tmp_path / "trace.txt"
    report = simulate(fig_params, xi_star, slots=3000, seed=11, trace_path=path)
    rows = parse_text(path.read_text())
    assert len(rows) == 3000
    assert [int(r["slot"]) for r in rows[:3]] == [1, 2, 3]
    rewards = [float(r["reward"]) for r in rows]
    assert math.fsum(rewards) / 3000 == pytest.approx(report.simulated_mean, rel=1e-12)
    for r in rows:
        battery = float(r["battery"])
        assert 0.0 <= float(r["action"]) <= battery <= B
        assert r["arrival"] in ("true", "false")
    trace = generate_arrivals(fig_params, 3000, seed=11)
    assert [r["arrival"] == "true" for r in rows] == trace.arrivals.tolist()


def test_chisquare_accepts_geometric_sample(rng):
    lengths = rng.geometric(0.3, size=50_000)
    result = cycle_length_chisquare(lengths, 0.3)
    assert result.bins == 21
    assert result.pvalue > 1e-3


def test_chisquare_rejects_wrong_law(rng):
    lengths = rng.geometric(0.5, size=50_000)
    assert cycle_length_chisquare(lengths, 0.3).pvalue < 1e-6


def test_compare_needs_two_seeds(fig_params, xi_star):
    with pytest.raises(ParameterError) as excinfo:
        compare(fig_params, xi_star, 100, [1])
    assert excinfo.value.field == "seeds"


def test_compare_orders_reports_by_seed(fig_params, xi_star):
    result = compare(fig_params, xi_star, 2000, [3, 1, 2])
    assert [r.seed for r in result.reports] == [3, 1, 2]
    assert [row["kind"] for row in result.records()] == ["seed"] * 3 + ["pooled"]


# ============================================================================
# LONG RUNS
# ============================================================================


@pytest.mark.slow
def test_pooled_seeds(fig_params, xi_star):
    result = compare(fig_params, xi_star, 100_000, range(1, 11))
    assert abs(result.pooled_z_score) <= 3.0
    assert {r.analytic for r in result.reports} == {result.analytic}
    assert all(result.pooled_std_error < r.std_error for r in result.reports)


@pytest.mark.slow
def test_parallel_replications_are_identical(fig_params, xi_star):
    serial = compare(fig_params, xi_star, 20_000, [4, 5])
    parallel = compare(fig_params, xi_star, 20_000, [4, 5], workers=2)
    assert serial == parallel


@pytest.mark.slow
def test_perturbed_allocation_is_detectably_worse(fig_params, xi_star, star_report):
    perturbed = AllocationSequence(
        (1.0, xi_star[0] + xi_star[1] - 1.0, *xi_star.values[2:]), B
    )
    result = compare(fig_params, perturbed, 100_000, [21, 22, 23, 24])
    gap = star_report.objective - result.analytic
    assert gap > 5 * result.pooled_std_error
    assert star_report.objective - result.pooled_mean > 3 * result.pooled_std_error
