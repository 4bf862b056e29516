from __future__ import annotations

import math

import numpy as np
import pytest

from eh_lookahead.core import AllocationSequence, ParameterError, PolicyError, cycle_allocation
from eh_lookahead.policy import PolicyState, action, lookahead_distance, observe, step

B = 100.0


def _state(battery, distance=0, xi_index=1, window=4):
    return PolicyState(battery, distance, xi_index, window, (False,) * window)


# ============================================================================
# DISTANCE
# ============================================================================


@pytest.mark.parametrize(
    ("view", "expected"),
    [
        ([False, False, False, False], 0),
        ([False, True, False, True], 2),
        ([True, False, False, False], 1),
        ([False, False, False, True], 4),
    ],
)
def test_lookahead_distance(view, expected):
    assert lookahead_distance(view, 4) == expected


def test_lookahead_distance_rejects_wrong_length():
    with pytest.raises(ParameterError):
        lookahead_distance([False, True], 4)
    with pytest.raises(ParameterError):
        lookahead_distance([])


def test_observe_scans_from_cursor():
    state = PolicyState(B, 0, 5, 1, (False, False, True, False))
    seen = observe(state)
    assert seen.distance == 3
    assert seen.xi_index == 1
    # A cursor at the far end only looks at the newest slot
    assert observe(PolicyState(B, 0, 5, 4, (False, False, True, False))).distance == 0


def test_state_invariants():
    with pytest.raises(PolicyError):
        PolicyState(-1.0, 0, 1, 1, (False,))
    with pytest.raises(PolicyError):
        PolicyState(1.0, 2, 1, 1, (False,))
    with pytest.raises(PolicyError):
        PolicyState(1.0, 0, 0, 1, (False,))


def test_initial_state_rejects_overfull_battery(fig_params):
    with pytest.raises(ParameterError):
        PolicyState.initial(fig_params, [False] * 4, battery=B + 1)


# ============================================================================
# ACTION
# ============================================================================


def test_action_splits_battery_up_to_visible_arrival(xi_star):
    assert action(_state(100.0, distance=4), xi_star) == 25.0
    assert action(_state(0.0, distance=1), xi_star) == 0.0


def test_action_spends_drought_allocation(xi_star):
    assert action(_state(100.0), xi_star) == xi_star[0]
    assert action(_state(100.0, xi_index=3), xi_star) == xi_star[2]


def test_action_never_exceeds_battery(xi_star):
    assert action(_state(1.0), xi_star) == 1.0


def test_action_past_prefix_drains_geometrically():
    xi = AllocationSequence((60.0, 30.0, 10.0 - 1e-7), B)
    fraction = xi[-1] / (xi.residual + xi[-1])
    assert action(_state(1e-7, xi_index=4), xi) == pytest.approx(1e-7 * fraction, rel=1e-12)
    assert action(_state(1e-7, xi_index=9), xi) < 1e-7


def test_action_past_prefix_requires_drained_battery():
    xi = AllocationSequence((20.0, 10.0), B)
    with pytest.raises(PolicyError):
        action(_state(70.0, xi_index=3), xi)


# ============================================================================
# STEP
# ============================================================================


def test_step_rejects_inconsistent_arrival(fig_params, xi_star):
    state = PolicyState.initial(fig_params, [False] * 4)
    with pytest.raises(PolicyError):
        step(state, fig_params, xi_star, False, True)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_short_cycle_splits_evenly(fig_params, xi_star, drive, k):
    arrivals = [True] + [False] * (k - 1) + [True] + [False] * 3
    slots = drive(fig_params, xi_star, arrivals)
    for battery, distance, spent, _ in slots[:k]:
        assert spent == pytest.approx(B / k, rel=1e-12)
        assert spent <= battery
    assert distance == 1
    assert slots[k][0] == B


@pytest.mark.parametrize("k", [5, 6, 9, 15])
def test_long_cycle_follows_allocation_then_splits(fig_params, xi_star, drive, k):
    arrivals = [True] + [False] * (k - 1) + [True]
    slots = drive(fig_params, xi_star, arrivals)
    spent = [s[2] for s in slots[:k]]
    expected = cycle_allocation(fig_params, xi_star, k)
    assert spent == pytest.approx(expected, rel=1e-12)
    assert math.fsum(spent) == pytest.approx(B, rel=1e-12)
    assert slots[k][0] == B


def test_drought_never_empties_battery(fig_params, xi_star, drive):
    slots = drive(fig_params, xi_star, [True] + [False] * 60)
    spent = [s[2] for s in slots]
    assert spent[:20] == list(xi_star.values[:20])
    assert all(s[0] > 0.0 for s in slots)


def test_random_trace_invariants(fig_params, xi_star, drive, rng):
    arrivals = rng.random(5000) < fig_params.p
    arrivals[0] = True
    slots = drive(fig_params, xi_star, arrivals)
    for battery, distance, spent, earned in slots:
        assert 0.0 <= spent <= battery <= B
        assert 0 <= distance <= fig_params.window
        assert earned >= 0.0
    # Every complete cycle spends the whole battery
    starts = np.flatnonzero(arrivals)
    spent = np.array([s[2] for s in slots])
    for a, b in zip(starts, starts[1:], strict=False):
        assert spent[a:b].sum() == pytest.approx(B, rel=1e-9)


def test_recharge_forgets_history(fig_params, xi_star, drive, rng):
    suffix = list(rng.random(400) < fig_params.p)
    first = [False, True, False] + [True] + suffix
    second = [True, False, False, False, False, False, False] + [True] + suffix
    a = [s[2] for s in drive(fig_params, xi_star, first)][3:]
    b = [s[2] for s in drive(fig_params, xi_star, second, initial_battery=0.0)][7:]
    assert a == b


def test_policy_is_deterministic(fig_params, xi_star, drive, rng):
    arrivals = list(rng.random(1000) < fig_params.p)
    assert drive(fig_params, xi_star, arrivals) == drive(fig_params, xi_star, arrivals)
