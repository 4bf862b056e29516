from __future__ import annotations

import math

import pytest

from eh_lookahead.core import (
    AdmissibilityError,
    AllocationSequence,
    NonInteriorError,
    ParameterError,
    SystemParams,
)
from eh_lookahead.objective import (
    epsilon_N,
    eval_T_infinity,
    eval_T_N,
    kkt_residuals,
    offline_bound,
    renewal_throughput,
    stationarity_rows,
    truncation_index,
)
from eh_lookahead.solver import solve_finite


def _head(params):
    p, g, b, w = params.p, params.gamma, params.B, params.window
    return math.fsum(
        p * p * (1 - p) ** (k - 1) * (k / 2) * math.log2(1 + g * b / k)
        for k in range(1, w + 1)
    )


def _hand_T_N(params, xi):
    """Term-by-term expansion of the four sums of T_N."""
    p, g, b, w = params.p, params.gamma, params.B, params.window
    n = len(xi)
    total = _head(params)
    consumed = 0.0
    for j, x in enumerate(xi, start=1):
        consumed += x
        total += p * (1 - p) ** (j + w - 1) * 0.5 * math.log2(1 + g * x)
        total += p * p * (1 - p) ** (j + w - 1) * (w / 2) * math.log2(1 + g * (b - consumed) / w)
    total += p * (1 - p) ** (w + n) * (w / 2) * math.log2(1 + g * (b - consumed) / w)
    return total


# ============================================================================
# THROUGHPUT FUNCTIONALS
# ============================================================================


def test_zero_allocation_leaves_only_uniform_terms(fig_params):
    p, g, b, w = fig_params.p, fig_params.gamma, fig_params.B, fig_params.window
    uniform = math.fsum(
        p * p * (1 - p) ** (k + w - 1) * (w / 2) * math.log2(1 + g * b / w)
        for k in range(1, 3000)
    )
    expected = _head(fig_params) + uniform
    assert eval_T_infinity(fig_params, [0.0, 0.0, 0.0]) == pytest.approx(expected, abs=1e-11)


def test_T_N_single_value(fig_params):
    p, g, w = fig_params.p, fig_params.gamma, fig_params.window
    expected = (
        _head(fig_params)
        + p * (1 - p) ** w * 0.5 * math.log2(1 + g * 20.0)
        + p * p * (1 - p) ** w * (w / 2) * math.log2(1 + g * 80.0 / w)
        + p * (1 - p) ** (w + 1) * (w / 2) * math.log2(1 + g * 80.0 / w)
    )
    assert eval_T_N(fig_params, [20.0]) == pytest.approx(expected, rel=1e-14)


def test_T_N_matches_hand_expansion(fig_params, rng):
    for _ in range(20):
        xi = list(rng.dirichlet([1.0, 1.0, 1.0])[:2] * fig_params.B)
        assert eval_T_N(fig_params, xi) == pytest.approx(_hand_T_N(fig_params, xi), rel=1e-13)


def test_T_N_equals_zero_extended_T_infinity(fig_params, rng):
    tail_tol = 1e-13
    for n in (1, 3, 8):
        xi = list(rng.dirichlet([1.0] * (n + 1))[:n] * fig_params.B)
        assert abs(eval_T_N(fig_params, xi) - eval_T_infinity(fig_params, xi, tail_tol)) < tail_tol


def test_T_N_needs_a_value(fig_params):
    with pytest.raises(ParameterError):
        eval_T_N(fig_params, [])


def test_inadmissible_sequence_is_rejected(fig_params):
    with pytest.raises(AdmissibilityError):
        eval_T_infinity(fig_params, [80.0, 30.0])


@pytest.mark.parametrize("tail_tol", [1e-6, 1e-9, 1e-12])
def test_tightening_the_tail_moves_the_value_less_than_the_tolerance(fig_params, xi_star, tail_tol):
    coarse = eval_T_infinity(fig_params, xi_star, tail_tol)
    assert abs(coarse - eval_T_infinity(fig_params, xi_star, tail_tol / 2)) < tail_tol
    assert abs(coarse - eval_T_infinity(fig_params, xi_star, tail_tol / 10)) < tail_tol


def test_T_infinity_rejects_bad_tail_tol(fig_params):
    with pytest.raises(ParameterError) as excinfo:
        eval_T_infinity(fig_params, [1.0], 0.0)
    assert excinfo.value.field == "tail_tol"


def test_T_N_is_strictly_concave(fig_params, rng):
    for _ in range(100):
        x = rng.dirichlet([1.0] * 4)[:3] * fig_params.B
        y = rng.dirichlet([1.0] * 4)[:3] * fig_params.B
        mid = eval_T_N(fig_params, list((x + y) / 2))
        assert mid > (eval_T_N(fig_params, list(x)) + eval_T_N(fig_params, list(y))) / 2


def test_renewal_form_agrees_with_three_sum_form(fig_params, xi_star, rng):
    assert renewal_throughput(fig_params, xi_star) == pytest.approx(
        eval_T_infinity(fig_params, xi_star), abs=1e-10
    )
    xi = list(rng.dirichlet([1.0] * 6)[:5] * fig_params.B)
    assert renewal_throughput(fig_params, xi) == pytest.approx(
        eval_T_infinity(fig_params, xi), abs=1e-10
    )


# ============================================================================
# BOUNDS
# ============================================================================


def test_epsilon_ratio_is_one_minus_p(fig_params):
    for n in (1, 5, 30):
        ratio = epsilon_N(fig_params, n + 1) / epsilon_N(fig_params, n)
        assert ratio == pytest.approx(1 - fig_params.p, rel=1e-12)


def test_epsilon_positive_and_small(fig_params):
    assert all(epsilon_N(fig_params, n) > 0 for n in range(1, 200))
    assert epsilon_N(fig_params, 60) < 1e-8


def test_epsilon_rejects_zero_length(fig_params):
    with pytest.raises(ParameterError):
        epsilon_N(fig_params, 0)


def test_truncation_index_is_smallest(fig_params):
    k = truncation_index(fig_params, 1e-12)
    assert epsilon_N(fig_params, k) < 1e-12
    assert epsilon_N(fig_params, k - 1) >= 1e-12


def test_offline_bound_near_certain_arrivals():
    params = SystemParams(1 - 1e-9, 0.5, 100.0, 4)
    assert offline_bound(params) == pytest.approx(0.5 * math.log2(51.0), rel=1e-6)


def test_offline_bound_dominates_optimum(fig_params, star_report):
    bound = offline_bound(fig_params)
    assert bound >= star_report.objective
    # Window-free
    assert offline_bound(SystemParams(0.3, 0.5, 100.0, 9)) == bound


# ============================================================================
# KKT RESIDUALS
# ============================================================================


def test_kkt_vanishes_at_finite_optimum(fig_params):
    xi = solve_finite(fig_params, 3).xi
    report = kkt_residuals(fig_params, xi)
    assert len(report.stationarity) == 3
    assert len(report.complementary_slackness_mu) == 3
    assert report.max_abs_residual < 1e-8
    assert report.max_abs_residual == max(abs(v) for v in report.stationarity)


def test_kkt_detects_perturbation(fig_params):
    xi = solve_finite(fig_params, 3).xi
    moved = AllocationSequence((xi[0] + 1.0, xi[1], xi[2]), fig_params.B)
    assert kkt_residuals(fig_params, moved).max_abs_residual > 1e-6


def test_telescoped_rows_match_direct_rows(fig_params, rng):
    for n in (1, 2, 5, 12):
        xi = list(rng.dirichlet([1.0] * (n + 1))[:n] * fig_params.B)
        direct = stationarity_rows(fig_params, xi)
        telescoped = stationarity_rows(fig_params, xi, telescoped=True)
        assert max(abs(direct - telescoped)) < 1e-12
        assert kkt_residuals(fig_params, xi).telescoped_discrepancy < 1e-12


def test_kkt_rejects_zero_entry(fig_params):
    with pytest.raises(NonInteriorError) as excinfo:
        kkt_residuals(fig_params, [10.0, 0.0, 5.0])
    assert excinfo.value.index == 1
