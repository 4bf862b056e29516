"""
Energy-Harvesting Look-Ahead Model - Look-Ahead Policy

Deterministic state machine for the optimal look-ahead policy: when an arrival
is visible in the window the battery is split evenly up to it, otherwise the
next entry of the drought allocation xi is spent.

Slot convention: at slot tau the battery already holds E_tau and the view
holds E_{tau+1}..E_{tau+w}.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from .core import (
    AllocationSequence,
    ParameterError,
    PolicyError,
    SystemParams,
    battery_update,
    reward,
)

DEFAULT_DRAIN_FLOOR = 1e-6


def lookahead_distance(window_view: Sequence[bool], window: int | None = None) -> int:
    """
    Distance to the earliest visible arrival.

    Args:
        window_view: Arrivals of the next w slots, nearest first
        window: Expected view length; checked when given

    Returns:
        1-based index of the first arrival, or 0 if the view has none
    """
    if window is not None and len(window_view) != window:
        raise ParameterError(
            "window_view", f"expected {window} entries, got {len(window_view)}"
        )
    if not window_view:
        raise ParameterError("window_view", "must not be empty")
    for t, arrival in enumerate(window_view, start=1):
        if arrival:
            return t
    return 0


@dataclass(frozen=True, slots=True)
class PolicyState:
    """
    Reduced state (battery, distance) plus the policy's bookkeeping.

    Attributes:
        battery: Energy available in the current slot
        distance: Slots until the observed arrival, 0 when none is visible
        xi_index: 1-based index of the next drought allocation to spend
        scan_cursor: 1-based view position where the next scan starts
        view: Arrivals of the next w slots
    """

    battery: float
    distance: int
    xi_index: int
    scan_cursor: int
    view: tuple[bool, ...]

    def __post_init__(self):
        window = len(self.view)
        if window < 1:
            raise PolicyError("window view must not be empty")
        if self.battery < 0.0:
            raise PolicyError(f"battery {self.battery!r} is negative")
        if not 0 <= self.distance <= window:
            raise PolicyError(f"distance {self.distance} outside [0, {window}]")
        if self.xi_index < 1:
            raise PolicyError(f"xi_index {self.xi_index} must be at least 1")
        if not 1 <= self.scan_cursor <= window:
            raise PolicyError(f"scan_cursor {self.scan_cursor} outside [1, {window}]")

    @classmethod
    def initial(
        cls,
        params: SystemParams,
        window_view: Sequence[bool],
        battery: float | None = None,
    ) -> PolicyState:
        """State at the first slot: full battery unless given, j = 1, view scanned."""
        view = tuple(bool(v) for v in window_view)
        if len(view) != params.window:
            raise ParameterError(
                "window_view", f"expected {params.window} entries, got {len(view)}"
            )
        level = params.battery_capacity if battery is None else float(battery)
        if not 0.0 <= level <= params.battery_capacity:
            raise ParameterError(
                "initial_battery",
                f"must lie in [0, {params.battery_capacity!r}], got {level!r}",
            )
        return observe(cls(level, 0, 1, 1, view))

    def to_record(self) -> dict[str, object]:
        return {
            "battery": self.battery,
            "distance": self.distance,
            "xi_index": self.xi_index,
        }


def observe(state: PolicyState) -> PolicyState:
    """
    Update the distance from the view, scanning from the cursor onwards.

    A detected arrival resets xi_index to 1. After a scan the cursor points at
    the last view position, the only one a shifted view can newly fill.
    """
    if state.distance > 0:
        return state
    window = len(state.view)
    tail = state.view[state.scan_cursor - 1 :]
    found = lookahead_distance(tail)
    if found:
        return PolicyState(state.battery, state.scan_cursor + found - 1, 1, window, state.view)
    return PolicyState(state.battery, 0, state.xi_index, window, state.view)


def action(
    state: PolicyState,
    xi: AllocationSequence,
    drain_floor: float = DEFAULT_DRAIN_FLOOR,
) -> float:
    """
    Energy spent in the current slot.

    battery / distance when an arrival is visible; otherwise
    min(xi_j, battery). Past the stored prefix every slot spends the fraction
    xi_K / (residual + xi_K) of the battery, which requires the prefix to
    have drained the battery below drain_floor * B.

    Raises:
        PolicyError: if the prefix runs out while its residual is still
            above the drain floor
    """
    if state.distance > 0:
        return state.battery / state.distance

    j = state.xi_index
    if j <= len(xi):
        return min(xi[j - 1], state.battery)

    if not len(xi):
        raise PolicyError("drought allocation is empty")
    if xi.residual > drain_floor * xi.capacity:
        raise PolicyError(
            f"allocation prefix of length {len(xi)} exhausted with residual "
            f"{xi.residual!r} above the drain floor"
        )
    last = xi[-1]
    fraction = last / (xi.residual + last) if last > 0.0 else 0.0
    return state.battery * fraction


def step(
    state: PolicyState,
    params: SystemParams,
    xi: AllocationSequence,
    incoming_window_slot: bool,
    arrival_now: bool,
    drain_floor: float = DEFAULT_DRAIN_FLOOR,
) -> tuple[PolicyState, float, float]:
    """
    Advance the policy by one slot.

    Args:
        state: State of the current slot
        params: Model parameters
        xi: Drought allocation
        incoming_window_slot: Arrival entering the far end of the view (E_{tau+w+1})
        arrival_now: Arrival applied to the battery for the next slot (E_{tau+1}),
            which must match the nearest view entry
        drain_floor: See `action`

    Returns:
        (next state, action spent, reward earned)
    """
    if bool(arrival_now) != state.view[0]:
        raise PolicyError(
            f"arrival_now={bool(arrival_now)} disagrees with the window view"
        )
    if state.battery > params.battery_capacity:
        raise PolicyError(f"battery {state.battery!r} exceeds capacity")

    spent = action(state, xi, drain_floor)
    earned = reward(spent, params.gamma)
    arrival = params.battery_capacity if arrival_now else 0.0
    level = battery_update(state.battery, spent, arrival, params.battery_capacity)
    view = state.view[1:] + (bool(incoming_window_slot),)

    if state.distance > 0:
        nxt = PolicyState(level, state.distance - 1, state.xi_index, 1, view)
    else:
        nxt = PolicyState(level, 0, state.xi_index + 1, len(view), view)
    return observe(nxt), spent, earned
