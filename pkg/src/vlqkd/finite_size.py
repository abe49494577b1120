"""Finite-size key-length arithmetic for fixed- and variable-length protocols.

Logarithms are base 2 except inside ``mu``, whose concentration bound uses
natural logarithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .bb84 import Bb84Setup, FrequencyVector, ec_conditional_entropy
from .entropy_opt import FeasibleSpec, KrausChannel, OptResult, Status, minimize_entropy

# correction-term conventions: log2(2 d_Z + 1) squared (default) or log2(d_Z + 1) squared
CORRECTION_BASES = ("2dz+1", "dz+1")


@dataclass(frozen=True)
class SecurityBudget:
    eps_AT: float
    eps_PA: float
    eps_EV: float

    def __post_init__(self) -> None:
        for name in ("eps_AT", "eps_PA", "eps_EV"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")

    @property
    def eps_secure_fixed(self) -> float:
        return max(self.eps_AT, self.eps_PA) + self.eps_EV

    @property
    def eps_secure_variable(self) -> float:
        return self.eps_AT + self.eps_PA + self.eps_EV

    @classmethod
    def fixed_preset(cls, eps_secure: float) -> "SecurityBudget":
        half = eps_secure / 2
        return cls(half, half, half)

    @classmethod
    def variable_preset(cls, eps_secure: float) -> "SecurityBudget":
        return cls(eps_secure / 4, eps_secure / 4, eps_secure / 2)


@dataclass(frozen=True)
class ProtocolParams:
    N: int
    m: int
    p_z: float = 0.5
    d_Z: int = 2
    f_EC: float = 1.16

    def __post_init__(self) -> None:
        if self.N < 2 or not 1 <= self.m < self.N:
            raise ValueError(f"need 1 <= m < N, got N={self.N}, m={self.m}")
        if not 0.0 < self.p_z < 1.0:
            raise ValueError("p_z must lie in (0, 1)")
        if self.d_Z < 2:
            raise ValueError("d_Z must be at least 2")
        if self.f_EC < 1.0:
            raise ValueError("error-correction efficiency must be >= 1")

    @property
    def n(self) -> int:
        return self.N - self.m

    @property
    def p_x(self) -> float:
        return 1.0 - self.p_z

    @classmethod
    def from_fraction(cls, N: int, m_fraction: float, **kwargs) -> "ProtocolParams":
        return cls(N=N, m=int(round(N * m_fraction)), **kwargs)


@dataclass(frozen=True)
class RenyiParams:
    alpha: float
    kappa: float
    d_Z: int
    n: int

    def __post_init__(self) -> None:
        upper = 1.0 + 1.0 / math.log2(2 * self.d_Z + 1)
        if not 1.0 < self.alpha < upper:
            raise ValueError(f"alpha={self.alpha} outside the admissible interval (1, {upper})")

    @classmethod
    def from_budget(cls, n: int, eps_PA: float, d_Z: int) -> "RenyiParams":
        kappa = math.sqrt(math.log2(1.0 / eps_PA)) / math.log2(d_Z + 1)
        return cls(1.0 + kappa / math.sqrt(n), kappa, d_Z, n)


@dataclass(frozen=True)
class LengthDecision:
    l: int
    leak: int


def mu(m: int, sigma_size: int, eps_AT: float) -> float:
    """1-norm radius that the observed frequencies exceed with probability <= eps_AT."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return math.sqrt(2.0) * math.sqrt((math.log(1.0 / eps_AT) + sigma_size * math.log(m + 1)) / m)


def renyi_correction(n: int, rp: RenyiParams, base: str = "2dz+1") -> float:
    if base == "2dz+1":
        width = math.log2(2 * rp.d_Z + 1)
    elif base == "dz+1":
        width = math.log2(rp.d_Z + 1)
    else:
        raise ValueError(f"unknown correction base {base!r}; expected one of {CORRECTION_BASES}")
    return n * (rp.alpha - 1.0) * width**2


def pa_penalty(rp: RenyiParams, eps_PA: float) -> float:
    """Privacy-amplification cost (alpha/(alpha-1)) (log 1/(4 eps_PA) + 2/alpha)."""
    alpha = rp.alpha
    return alpha / (alpha - 1.0) * (math.log2(1.0 / (4.0 * eps_PA)) + 2.0 / alpha)


def ev_hash_length(eps_EV: float) -> int:
    return math.ceil(math.log2(1.0 / eps_EV))


def theta(rp: RenyiParams, eps_PA: float, eps_EV: float) -> float:
    return pa_penalty(rp, eps_PA) + ev_hash_length(eps_EV)


def ec_leak(entropy_per_signal: float, params: ProtocolParams) -> int:
    """Error-correction leakage f n H(Z|YC), rounded up to whole bits."""
    return math.ceil(params.f_EC * params.n * entropy_per_signal)


def key_length_fixed(
    entropy_lb: float,
    leak: int,
    params: ProtocolParams,
    budget: SecurityBudget,
    correction_base: str = "2dz+1",
) -> LengthDecision:
    """Hash length for one acceptance rung given a certified per-signal entropy bound."""
    n = params.n
    rp = RenyiParams.from_budget(n, budget.eps_PA, params.d_Z)
    statistical = n * entropy_lb - renyi_correction(n, rp, correction_base)
    return _decide(statistical, int(leak), rp, budget, n)


def _decide(statistical: float, leak: int, rp: RenyiParams, budget: SecurityBudget, n: int) -> LengthDecision:
    # shared by both protocols so equal inputs give bit-identical lengths
    raw = statistical - leak - theta(rp, budget.eps_PA, budget.eps_EV)
    return LengthDecision(max(0, min(n, math.floor(raw))), leak)


def b_stat(
    fobs: FrequencyVector,
    params: ProtocolParams,
    budget: SecurityBudget,
    ch: KrausChannel,
    setup: Bb84Setup,
    sigma_size: int = 16,
    correction_base: str = "2dz+1",
    tol: float = 1e-5,
    solve: Optional[Callable[[FeasibleSpec], OptResult]] = None,
) -> Optional[float]:
    """Statistical bound n * min_V H(Z|CE) - correction, or None if V is empty.

    ``solve`` lets callers route the optimization through a cache.
    """
    radius = mu(params.m, sigma_size, budget.eps_AT)
    spec = FeasibleSpec.for_setup(setup, fobs, radius)
    result = solve(spec) if solve else minimize_entropy(spec, ch, tol)
    if result.status is Status.INFEASIBLE:
        return None
    rp = RenyiParams.from_budget(params.n, budget.eps_PA, params.d_Z)
    return params.n * result.certified_lower - renyi_correction(params.n, rp, correction_base)


LeakFunction = Callable[[FrequencyVector], int]


def observed_leak(params: ProtocolParams) -> LeakFunction:
    """Default leakage rule f n H(Z|YC) evaluated on the observed statistics."""
    return lambda fobs: ec_leak(ec_conditional_entropy(fobs), params)


def variable_length_decision(
    fobs: FrequencyVector,
    params: ProtocolParams,
    budget: SecurityBudget,
    ch: KrausChannel,
    setup: Bb84Setup,
    leak_fn: Optional[LeakFunction] = None,
    sigma_size: int = 16,
    correction_base: str = "2dz+1",
    tol: float = 1e-5,
    solve: Optional[Callable[[FeasibleSpec], OptResult]] = None,
) -> LengthDecision:
    """Key length l(F_obs) = max(0, floor(b_stat - leak - theta)); empty V gives 0."""
    leak = (leak_fn or observed_leak(params))(fobs)
    bound = b_stat(fobs, params, budget, ch, setup, sigma_size, correction_base, tol, solve)
    if bound is None:
        return LengthDecision(0, leak)
    rp = RenyiParams.from_budget(params.n, budget.eps_PA, params.d_Z)
    return _decide(bound, leak, rp, budget, params.n)
