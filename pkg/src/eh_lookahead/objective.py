"""
Energy-Harvesting Look-Ahead Model - Throughput Objectives

Exact evaluation of the long-term throughput functional T_inf, its finite
restriction T_N, the non-causal (offline) bound, the truncation bound eps_N
and the KKT stationarity residuals of the N-dimensional problem.

Every infinite series is truncated at an index chosen from a closed-form
geometric tail bound, never from the size of the last term.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import (
    AllocationSequence,
    NonInteriorError,
    ParameterError,
    SystemParams,
    cycle_allocation,
)

DEFAULT_TAIL_TOL = 1e-12

_LN2 = math.log(2.0)


def _check_tail_tol(tail_tol: float) -> None:
    if not tail_tol > 0.0:
        raise ParameterError("tail_tol", f"must be positive, got {tail_tol!r}")


# ============================================================================
# TRUNCATION BOUNDS
# ============================================================================


def _epsilon_scale(params: SystemParams) -> float:
    """Bracket of eps_N: 1/2 [log2(1 + gamma B) + p w log2(1 + gamma B / w)]"""
    gb = params.gamma * params.battery_capacity
    w = params.window
    return 0.5 * (math.log2(1.0 + gb) + params.p * w * math.log2(1.0 + gb / w))


def epsilon_N(params: SystemParams, N: int) -> float:
    """
    Closed-form bound on T_inf^* - T_N^*.

    eps_N = (1-p)^(w+N) / 2 * [log2(1 + gamma B) + p w log2(1 + gamma B / w)]
    """
    if N < 1:
        raise ParameterError("N", f"must be at least 1, got {N!r}")
    return (1.0 - params.p) ** (params.window + N) * _epsilon_scale(params)


def truncation_index(params: SystemParams, tail_tol: float) -> int:
    """Smallest K >= 1 with eps_K < tail_tol."""
    _check_tail_tol(tail_tol)
    scale = _epsilon_scale(params)
    q = 1.0 - params.p
    # eps_K = scale * q^(w+K) < tail_tol  <=>  K > log(tail_tol/scale)/log(q) - w
    estimate = math.log(tail_tol / scale) / math.log(q) - params.window
    k = max(1, math.floor(estimate))
    while epsilon_N(params, k) >= tail_tol:
        k += 1
    while k > 1 and epsilon_N(params, k - 1) < tail_tol:
        k -= 1
    return k


def _cycle_tail_index(params: SystemParams, tail_tol: float) -> int:
    """
    Smallest K with p (1-p)^K gamma B / (2 ln 2) < tail_tol.

    Any cycle of length k earns at most (k/2) log2(1 + gamma B / k), which is
    below gamma B / (2 ln 2); weighting by p^2 (1-p)^(k-1) and summing over
    k > K gives the bound.
    """
    _check_tail_tol(tail_tol)
    bound = params.p * params.gamma * params.battery_capacity / (2.0 * _LN2)
    q = 1.0 - params.p
    k = 1
    if bound * q > tail_tol:
        k = max(1, math.ceil(math.log(tail_tol / bound) / math.log(q)))
    while bound * q**k >= tail_tol:
        k += 1
    return k


# ============================================================================
# THROUGHPUT FUNCTIONALS
# ============================================================================


def _uniform_head(params: SystemParams) -> float:
    """sum_{k=1}^{w} p^2 (1-p)^(k-1) (k/2) log2(1 + gamma B / k)"""
    p = params.p
    k = np.arange(1, params.window + 1, dtype=float)
    terms = p * p * (1.0 - p) ** (k - 1) * 0.5 * k * np.log2(
        1.0 + params.gamma * params.battery_capacity / k
    )
    return math.fsum(terms)


def _drought_sums(params: SystemParams, values: np.ndarray) -> tuple[float, float]:
    """
    Middle and uniform-phase sums of T_inf over indices 1..len(values).

    Returns:
        (sum_j p (1-p)^(j+w-1) 1/2 log2(1 + gamma xi_j),
         sum_k p^2 (1-p)^(k+w-1) (w/2) log2(1 + gamma R_k / w))
    """
    if values.size == 0:
        return 0.0, 0.0
    p = params.p
    w = params.window
    gamma = params.gamma
    j = np.arange(1, values.size + 1, dtype=float)
    weight = p * (1.0 - p) ** (j + w - 1)
    remaining = np.maximum(params.battery_capacity - np.cumsum(values), 0.0)
    middle = weight * 0.5 * np.log2(1.0 + gamma * values)
    uniform = p * weight * 0.5 * w * np.log2(1.0 + gamma * remaining / w)
    return math.fsum(middle), math.fsum(uniform)


def eval_T_N(params: SystemParams, xi: AllocationSequence | Sequence[float]) -> float:
    """
    Finite objective T_N(xi_1..xi_N) = T_inf(xi_1..xi_N, 0, 0, ...).

    Closed form with four terms, the last one collecting the geometric tail of
    the uniform-phase sum once the sequence stops spending.
    """
    xi = AllocationSequence.of(params, xi)
    n = len(xi)
    if n < 1:
        raise ParameterError("N", "T_N needs at least one value")
    p = params.p
    w = params.window
    middle, uniform = _drought_sums(params, xi.as_array())
    terminal = (
        p
        * (1.0 - p) ** (w + n)
        * 0.5
        * w
        * math.log2(1.0 + params.gamma * xi.residual / w)
    )
    return math.fsum((_uniform_head(params), middle, uniform, terminal))


def eval_T_infinity(
    params: SystemParams,
    xi: AllocationSequence | Sequence[float],
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> float:
    """
    Long-term throughput T_inf of an admissible sequence.

    Both infinite sums are cut at the first K with eps_K < tail_tol, so the
    returned value is within tail_tol below the exact series. Entries past
    the stored prefix are zero.

    Args:
        params: Model parameters
        xi: Admissible allocation prefix
        tail_tol: Absolute truncation tolerance

    Returns:
        Throughput in bits per slot
    """
    xi = AllocationSequence.of(params, xi)
    k = truncation_index(params, tail_tol)
    values = np.zeros(k)
    prefix = xi.as_array()[:k]
    values[: prefix.size] = prefix
    middle, uniform = _drought_sums(params, values)
    return math.fsum((_uniform_head(params), middle, uniform))


def offline_bound(params: SystemParams, tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """
    Throughput of the non-causal model (w = infinity).

    sum_k p^2 (1-p)^(k-1) (k/2) log2(1 + gamma B / k), truncated by the
    cycle-reward tail bound.
    """
    k_max = _cycle_tail_index(params, tail_tol)
    p = params.p
    k = np.arange(1, k_max + 1, dtype=float)
    terms = p * p * (1.0 - p) ** (k - 1) * 0.5 * k * np.log2(
        1.0 + params.gamma * params.battery_capacity / k
    )
    return math.fsum(terms)


def renewal_throughput(
    params: SystemParams,
    xi: AllocationSequence | Sequence[float],
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> float:
    """
    Long-run throughput from the renewal-reward form.

    p * sum_k Pr{L = k} * (reward earned in a cycle of length k), with the
    in-cycle energies given by cycle_allocation. Agrees with eval_T_infinity
    up to the two truncation tolerances.
    """
    xi = AllocationSequence.of(params, xi)
    k_max = _cycle_tail_index(params, tail_tol)
    p = params.p
    gamma = params.gamma
    terms = []
    for k in range(1, k_max + 1):
        energies = np.asarray(cycle_allocation(params, xi, k))
        cycle_reward = math.fsum(0.5 * np.log2(1.0 + gamma * energies))
        terms.append(p * p * (1.0 - p) ** (k - 1) * cycle_reward)
    return math.fsum(terms)


# ============================================================================
# KKT RESIDUALS
# ============================================================================


@dataclass(frozen=True, slots=True)
class KktResidualReport:
    """
    Residuals of the KKT system of the N-dimensional problem at a candidate.

    Multipliers are taken as lambda = 0 and mu_j = 0 (both vanish at the
    optimum), so `stationarity` holds the plain gradient rows and the two
    slackness lists are identically zero.
    """

    stationarity: tuple[float, ...]
    complementary_slackness_mu: tuple[float, ...]
    energy_slack: float
    max_abs_residual: float
    scale: float
    telescoped_discrepancy: float

    @property
    def scaled_max_abs_residual(self) -> float:
        """max_abs_residual relative to the gradient magnitude at xi = 0."""
        return self.max_abs_residual / self.scale

    def to_record(self) -> dict[str, object]:
        return {
            "kkt_max_abs_residual": self.max_abs_residual,
            "kkt_scale": self.scale,
            "kkt_scaled_max": self.scaled_max_abs_residual,
            "kkt_telescoped_discrepancy": self.telescoped_discrepancy,
        }


def _row_weights(params: SystemParams, n: int) -> np.ndarray:
    """c_j = p (1-p)^(w+j-1) gamma / 2 for j = 1..n"""
    p = params.p
    j = np.arange(1, n + 1, dtype=float)
    return p * (1.0 - p) ** (params.window + j - 1) * 0.5 * params.gamma


def stationarity_rows(
    params: SystemParams,
    values: AllocationSequence | Sequence[float],
    telescoped: bool = False,
) -> np.ndarray:
    """
    Gradient rows of the N-dimensional KKT system with zero multipliers.

    row_j = c_j / (1 + gamma xi_j)
            - sum_{k=j}^{N-1} p c_k / (1 + gamma R_k / w)
            - c_N / (1 + gamma R_N / w)

    With `telescoped=True` the rows are built backwards from row_N through
    row_j - row_{j+1} = c_j/(1+gamma xi_j) - c_{j+1}/(1+gamma xi_{j+1})
    - p c_j / (1 + gamma R_j / w).
    """
    xi = AllocationSequence.of(params, values)
    x = xi.as_array()
    n = x.size
    if n < 1:
        raise ParameterError("N", "stationarity rows need at least one value")
    p = params.p
    gamma = params.gamma
    c = _row_weights(params, n)
    share = 1.0 / (1.0 + gamma * xi.residuals() / params.window)
    spend = c / (1.0 + gamma * x)

    if not telescoped:
        drain = p * c[:-1] * share[:-1]
        # tail[j] = sum_{k=j}^{N-1} drain[k]  (0-based), zero for the last row
        tail = np.zeros(n)
        tail[:-1] = np.cumsum(drain[::-1])[::-1]
        return spend - tail - c[-1] * share[-1]

    rows = np.empty(n)
    rows[-1] = spend[-1] - c[-1] * share[-1]
    for j in range(n - 2, -1, -1):
        rows[j] = rows[j + 1] + spend[j] - spend[j + 1] - p * c[j] * share[j]
    return rows


def kkt_residuals(
    params: SystemParams, xi: AllocationSequence | Sequence[float]
) -> KktResidualReport:
    """
    KKT certificate of an interior candidate for the N-dimensional problem.

    Raises:
        NonInteriorError: if some xi_j is zero
    """
    xi = AllocationSequence.of(params, xi)
    for index, value in enumerate(xi.values):
        if value <= 0.0:
            raise NonInteriorError(index)

    direct = stationarity_rows(params, xi)
    telescoped = stationarity_rows(params, xi, telescoped=True)
    n = direct.size
    # At xi = 0 every row equals c_j (1 - 1/(1 + gamma B / w)); row 1 is largest
    c1 = _row_weights(params, 1)[0]
    scale = c1 * (1.0 - 1.0 / (1.0 + params.gamma * params.battery_capacity / params.window))
    return KktResidualReport(
        stationarity=tuple(float(v) for v in direct),
        complementary_slackness_mu=(0.0,) * n,
        energy_slack=0.0,
        max_abs_residual=float(np.max(np.abs(direct))),
        scale=float(scale),
        telescoped_discrepancy=float(np.max(np.abs(direct - telescoped))),
    )
