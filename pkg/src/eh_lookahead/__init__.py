"""eh-lookahead: optimal power control for an energy-harvesting transmitter with look-ahead."""

from .core import (
    AdmissibilityError,
    AllocationSequence,
    ArrivalTrace,
    EnergyCausalityError,
    ModelError,
    NonInteriorError,
    ParameterError,
    PolicyError,
    SolverError,
    SystemParams,
    battery_update,
    cycle_allocation,
    reward,
    validate_params,
)
from .objective import (
    epsilon_N,
    eval_T_infinity,
    eval_T_N,
    kkt_residuals,
    offline_bound,
    renewal_throughput,
)
from .solver import (
    brute_force_oracle,
    solve_finite,
    solve_infinite,
    verify_structure,
)

__all__ = [
    "SystemParams",
    "AllocationSequence",
    "ArrivalTrace",
    "validate_params",
    "reward",
    "battery_update",
    "cycle_allocation",
    "epsilon_N",
    "eval_T_N",
    "eval_T_infinity",
    "offline_bound",
    "renewal_throughput",
    "kkt_residuals",
    "solve_finite",
    "solve_infinite",
    "brute_force_oracle",
    "verify_structure",
    "ModelError",
    "ParameterError",
    "AdmissibilityError",
    "NonInteriorError",
    "EnergyCausalityError",
    "SolverError",
    "PolicyError",
    "__version__",
]

# Keep in sync with `pyproject.toml`.
__version__ = "0.1.0"
