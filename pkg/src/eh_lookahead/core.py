"""
Energy-Harvesting Look-Ahead Model - Core Types

Contains the model parameters, allocation sequences, arrival traces and the
primitive model equations (reward, battery update, in-cycle allocation).
"""

from __future__ import annotations

import math
import numbers
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

# ============================================================================
# ERRORS
# ============================================================================


class ModelError(Exception):
    """Base class for every domain error raised by eh_lookahead."""

    field: str | None = None


class ParameterError(ModelError, ValueError):
    """A model parameter or operation argument is out of range."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class AdmissibilityError(ModelError, ValueError):
    """An allocation sequence has a negative entry or spends more than B."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.field = "xi"
        self.index = index


class NonInteriorError(ModelError, ValueError):
    """A KKT certificate was requested for a sequence with a zero entry."""

    def __init__(self, index: int):
        super().__init__(f"xi[{index}] is not strictly positive")
        self.field = "xi"
        self.index = index


class EnergyCausalityError(ModelError, ValueError):
    """An action spends more energy than the battery holds."""

    def __init__(self, action: float, level: float):
        super().__init__(f"action {action!r} exceeds battery level {level!r}")
        self.field = "action"


class SolverError(ModelError, RuntimeError):
    """The shooting bisection failed to converge."""

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        super().__init__(message)
        self.field = "solver"
        self.bracket = bracket


class PolicyError(ModelError, RuntimeError):
    """The policy state machine received inconsistent input."""

    def __init__(self, message: str):
        super().__init__(message)
        self.field = "policy"


# ============================================================================
# SYSTEM PARAMETERS
# ============================================================================


_PARAM_FIELDS = ("p", "gamma", "battery_capacity", "window")


@dataclass(frozen=True, slots=True)
class SystemParams:
    """
    Channel, battery and look-ahead model (p, gamma, B, w).

    Arrivals are Bernoulli(p) packets of exactly B energy units, the reward of
    an action A is 1/2 log2(1 + gamma A), and the transmitter sees the next
    `window` slots of arrivals.
    """

    p: float
    gamma: float
    battery_capacity: float
    window: int

    def __post_init__(self):
        if not isinstance(self.window, numbers.Integral) or isinstance(
            self.window, bool
        ):
            raise ParameterError("window", f"must be an integer, got {self.window!r}")
        for name in ("p", "gamma", "battery_capacity"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, numbers.Real):
                raise ParameterError(name, f"must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(name, f"must be finite, got {value!r}")
        if not 0.0 < self.p < 1.0:
            raise ParameterError("p", f"must lie in the open interval (0, 1), got {self.p!r}")
        if self.gamma <= 0.0:
            raise ParameterError("gamma", f"must be positive, got {self.gamma!r}")
        if self.battery_capacity <= 0.0:
            raise ParameterError(
                "battery_capacity", f"must be positive, got {self.battery_capacity!r}"
            )
        if self.window < 1:
            raise ParameterError("window", f"must be at least 1, got {self.window!r}")

    @property
    def B(self) -> float:
        """Alias for battery_capacity"""
        return self.battery_capacity

    def to_record(self) -> dict[str, object]:
        return {
            "p": self.p,
            "gamma": self.gamma,
            "battery_capacity": self.battery_capacity,
            "window": self.window,
        }


def validate_params(raw: Mapping[str, object] | Sequence[object]) -> SystemParams:
    """
    Build a SystemParams from a mapping or a (p, gamma, B, w) tuple.

    Args:
        raw: Either a mapping with keys p, gamma, battery_capacity (or B) and
            window (or w), or a 4-element sequence in that order.

    Returns:
        Validated SystemParams

    Raises:
        ParameterError: naming the first offending field
    """
    if isinstance(raw, Mapping):
        aliases = {"B": "battery_capacity", "w": "window", "g": "gamma"}
        values = {aliases.get(k, k): v for k, v in raw.items()}
        missing = [name for name in _PARAM_FIELDS if name not in values]
        if missing:
            raise ParameterError(missing[0], "missing")
        p, gamma, capacity, window = (values[name] for name in _PARAM_FIELDS)
    else:
        if len(raw) != 4:
            raise ParameterError("params", f"expected 4 values, got {len(raw)}")
        p, gamma, capacity, window = raw

    # Accept integral floats for the window (e.g. parsed from text)
    if isinstance(window, float) and window.is_integer():
        window = int(window)
    return SystemParams(p=p, gamma=gamma, battery_capacity=capacity, window=window)


# ============================================================================
# ALLOCATION SEQUENCE
# ============================================================================


@dataclass(frozen=True, slots=True)
class AllocationSequence:
    """
    Finite prefix of an allocation sequence xi_1..xi_N for a battery of size B.

    The sequence is admissible by construction: every value is non-negative
    and the total does not exceed the capacity. `residual` is B - sum(values).
    """

    values: tuple[float, ...]
    capacity: float
    residual: float = field(init=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        for index, value in enumerate(values):
            if not math.isfinite(value) or value < 0.0:
                raise AdmissibilityError(
                    f"xi[{index}] = {value!r} is not a non-negative number", index
                )
        total = math.fsum(values)
        if total > self.capacity:
            raise AdmissibilityError(
                f"sum(xi) = {total!r} exceeds battery capacity {self.capacity!r}"
            )
        # correctly rounded B - sum, no intermediate rounding of the total
        residual = max(math.fsum((self.capacity, *(-v for v in values))), 0.0)
        object.__setattr__(self, "residual", residual)

    @classmethod
    def of(
        cls, params: SystemParams, values: AllocationSequence | Sequence[float]
    ) -> AllocationSequence:
        """Coerce values into an AllocationSequence for the given model."""
        if isinstance(values, AllocationSequence):
            if values.capacity != params.battery_capacity:
                raise AdmissibilityError(
                    f"sequence built for capacity {values.capacity!r}, "
                    f"model has {params.battery_capacity!r}"
                )
            return values
        return cls(tuple(values), params.battery_capacity)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def residuals(self) -> np.ndarray:
        """
        Battery left after each index: B - sum_{i<=j} xi_i, for j = 1..N.

        Computed as residual + sum_{i>j} xi_i so the tail entries keep full
        relative precision when they are many orders below B.
        """
        if not self.values:
            return np.empty(0)
        values = self.as_array()
        later = np.zeros_like(values)
        later[:-1] = np.cumsum(values[:0:-1])[::-1]
        return later + self.residual

    def to_record(self) -> dict[str, object]:
        return {
            "n": len(self.values),
            "residual": self.residual,
            "xi": list(self.values),
        }


# ============================================================================
# ARRIVAL TRACE
# ============================================================================


PRNG_NAME = "numpy.PCG64"


@dataclass(frozen=True, eq=False, slots=True)
class ArrivalTrace:
    """
    Realized Bernoulli arrival sequence E_1..E_T (True = a packet of size B).

    Regenerating from (p, length, seed) reproduces `arrivals` bit-exactly.
    """

    arrivals: np.ndarray
    seed: int
    p: float

    def __post_init__(self):
        arrivals = np.asarray(self.arrivals, dtype=bool)
        if arrivals.ndim != 1 or arrivals.size < 1:
            raise ParameterError("arrivals", "must be a non-empty 1-D sequence")
        arrivals = arrivals.copy()
        arrivals.flags.writeable = False
        object.__setattr__(self, "arrivals", arrivals)

    @classmethod
    def generate(cls, p: float, length: int, seed: int) -> ArrivalTrace:
        """Draw `length` i.i.d. Bernoulli(p) arrivals from a PCG64 stream."""
        if length < 1:
            raise ParameterError("slots", f"must be at least 1, got {length!r}")
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls(rng.random(length) < p, seed, p)

    @property
    def length(self) -> int:
        return int(self.arrivals.size)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArrivalTrace):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.p == other.p
            and np.array_equal(self.arrivals, other.arrivals)
        )

    def __hash__(self) -> int:
        return hash((self.seed, self.p, self.length))

    def regenerate(self) -> ArrivalTrace:
        return ArrivalTrace.generate(self.p, self.length, self.seed)

    def frequency(self) -> float:
        return float(self.arrivals.mean())

    def to_record(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "p": self.p,
            "length": self.length,
            "arrivals": int(self.arrivals.sum()),
            "prng": PRNG_NAME,
        }


# ============================================================================
# MODEL EQUATIONS
# ============================================================================


def reward(action: float, gamma: float) -> float:
    """Throughput of one slot, 1/2 log2(1 + gamma * action), in bits."""
    if action < 0.0:
        raise ParameterError("action", f"must be non-negative, got {action!r}")
    return 0.5 * math.log2(1.0 + gamma * action)


def battery_update(level: float, action: float, arrival: float, capacity: float) -> float:
    """
    Battery level of the next slot: min(level - action + arrival, capacity).

    Args:
        level: Battery level before the action
        action: Energy spent in this slot (0 <= action <= level)
        arrival: Harvested energy of the next slot, either 0 or capacity
        capacity: Battery size B

    Returns:
        New battery level in [0, capacity]
    """
    if action < 0.0:
        raise ParameterError("action", f"must be non-negative, got {action!r}")
    if action > level:
        raise EnergyCausalityError(action, level)
    if arrival != 0.0 and arrival != capacity:
        raise ParameterError("arrival", f"must be 0 or {capacity!r}, got {arrival!r}")
    return min(level - action + arrival, capacity)


def cycle_allocation(
    params: SystemParams, xi: AllocationSequence, k: int
) -> list[float]:
    """
    Per-slot energies of a renewal cycle of length k under the look-ahead policy.

    For k <= w the arrival is visible from the first slot and the battery is
    split evenly. For k > w the first k - w slots follow xi (zero past the
    stored prefix) and the remaining battery is split over the last w slots.
    """
    if k < 1:
        raise ParameterError("k", f"cycle length must be at least 1, got {k!r}")
    capacity = params.battery_capacity
    w = params.window
    if k <= w:
        return [capacity / k] * k

    drought = list(xi.values[: k - w])
    drought.extend([0.0] * (k - w - len(drought)))
    remaining = max(capacity - math.fsum(drought), 0.0)
    return drought + [remaining / w] * w
