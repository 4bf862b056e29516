"""Shared fixtures: the reference model (p=0.3, gamma=0.5, B=100, w=4) and its optimum."""

from __future__ import annotations

import numpy as np
import pytest

from eh_lookahead.core import SystemParams
from eh_lookahead.policy import PolicyState, step
from eh_lookahead.solver import solve_infinite


@pytest.fixture(scope="session")
def fig_params() -> SystemParams:
    return SystemParams(p=0.3, gamma=0.5, battery_capacity=100.0, window=4)


@pytest.fixture(scope="session")
def star_report(fig_params):
    return solve_infinite(fig_params)


@pytest.fixture(scope="session")
def xi_star(star_report):
    return star_report.xi


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def _drive(params, xi, arrivals, initial_battery=None):
    """
    Step the policy over an explicit arrival list (entry t is E_{t+1}).

    Returns one (battery, distance, action, reward) tuple per slot.
    """
    arrivals = [bool(a) for a in arrivals]
    w = params.window
    capacity = params.battery_capacity
    padded = arrivals + [False] * (w + 1)
    start = capacity if initial_battery is None else initial_battery
    level = min(start + (capacity if padded[0] else 0.0), capacity)
    state = PolicyState.initial(params, padded[1 : 1 + w], level)
    out = []
    for t in range(1, len(arrivals) + 1):
        before = state
        state, spent, earned = step(state, params, xi, padded[t + w], padded[t])
        out.append((before.battery, before.distance, spent, earned))
    return out


@pytest.fixture
def drive():
    return _drive
