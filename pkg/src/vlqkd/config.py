"""Experiment configuration loaded from TOML, with field-level validation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .finite_size import CORRECTION_BASES, ProtocolParams, SecurityBudget
from .protocol import ChannelEnsemble
from .bb84 import ChannelParams

OPTIMIZER_METHODS = ("barrier", "frank-wolfe")
SPLIT_POLICIES = ("fixed", "variable", "custom")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _require(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ConfigError(name, message)


@dataclass(frozen=True)
class ProtocolConfig:
    N: int = 1_000_000
    m_fraction: float = 0.05
    p_z: float = 0.5
    f_EC: float = 1.16
    d_Z: int = 2

    def validate(self) -> None:
        _require(isinstance(self.N, int) and self.N >= 2, "protocol.N", "must be an integer >= 2")
        _require(0.0 < self.m_fraction < 1.0, "protocol.m_fraction", "must lie in (0, 1)")
        _require(0.0 < self.p_z < 1.0, "protocol.p_z", "must lie in (0, 1)")
        _require(self.f_EC >= 1.0, "protocol.f_EC", "must be >= 1")
        _require(isinstance(self.d_Z, int) and self.d_Z >= 2, "protocol.d_Z", "must be an integer >= 2")
        m = int(round(self.N * self.m_fraction))
        _require(1 <= m < self.N, "protocol.m_fraction", f"gives m={m} test rounds, need 1 <= m < N")

    def params(self) -> ProtocolParams:
        return ProtocolParams.from_fraction(self.N, self.m_fraction, p_z=self.p_z, d_Z=self.d_Z, f_EC=self.f_EC)


@dataclass(frozen=True)
class SplitConfig:
    """How eps_secure is divided; ``custom`` reads the three values below."""

    policy: str
    eps_AT: Optional[float] = None
    eps_PA: Optional[float] = None
    eps_EV: Optional[float] = None


@dataclass(frozen=True)
class SecurityConfig:
    eps_secure: float = 1e-12
    fixed: SplitConfig = SplitConfig("fixed")
    variable: SplitConfig = SplitConfig("variable")

    def validate(self) -> None:
        _require(0.0 < self.eps_secure < 1.0, "security.eps_secure", "must lie in (0, 1)")
        self.fixed_budget()
        self.variable_budget()

    def _budget(self, name: str, split: SplitConfig, accounting: str) -> SecurityBudget:
        prefix = f"security.{name}"
        _require(split.policy in SPLIT_POLICIES, f"{prefix}.policy", f"must be one of {SPLIT_POLICIES}")
        if split.policy == "fixed":
            return SecurityBudget.fixed_preset(self.eps_secure)
        if split.policy == "variable":
            return SecurityBudget.variable_preset(self.eps_secure)
        for key in ("eps_AT", "eps_PA", "eps_EV"):
            value = getattr(split, key)
            _require(value is not None, f"{prefix}.{key}", "required by the custom policy")
            _require(0.0 < value < 1.0, f"{prefix}.{key}", "must lie in (0, 1)")
        budget = SecurityBudget(split.eps_AT, split.eps_PA, split.eps_EV)
        total = getattr(budget, accounting)
        _require(
            total <= self.eps_secure * (1 + 1e-12),
            prefix,
            f"split gives eps_secure={total:.3e}, above the target {self.eps_secure:.3e}",
        )
        return budget

    def fixed_budget(self) -> SecurityBudget:
        return self._budget("fixed", self.fixed, "eps_secure_fixed")

    def variable_budget(self) -> SecurityBudget:
        return self._budget("variable", self.variable, "eps_secure_variable")


@dataclass(frozen=True)
class LadderConfig:
    """Acceptance radii, either explicit or as an inclusive start/stop/step grid."""

    start: float = 0.0
    stop: float = 0.06
    step: float = 0.002
    radii: Optional[tuple[float, ...]] = None

    def validate(self) -> None:
        grid = self.grid()
        _require(len(grid) > 0, "ladder", "grid is empty")
        _require(all(r >= 0 for r in grid), "ladder", "radii must be nonnegative")
        _require(all(b >= a for a, b in zip(grid, grid[1:])), "ladder.radii", "must be sorted")

    def grid(self) -> tuple[float, ...]:
        if self.radii is not None:
            return tuple(float(r) for r in self.radii)
        _require(self.step > 0, "ladder.step", "must be positive")
        _require(self.stop >= self.start, "ladder.stop", "must be >= ladder.start")
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return tuple(float(v) for v in np.round(self.start + self.step * np.arange(count), 12))


@dataclass(frozen=True)
class ChannelConfig:
    depol_q: float = 0.02
    theta_deg: float = 2.0

    def validate(self) -> None:
        _require(0.0 <= self.depol_q <= 1.0, "channel.depol_q", "must lie in [0, 1]")

    def params(self) -> ChannelParams:
        return ChannelParams.from_degrees(self.depol_q, self.theta_deg)


@dataclass(frozen=True)
class EnsembleConfig:
    depol_q: tuple[float, ...] = (0.02, 0.03, 0.04, 0.05)
    theta_deg: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)
    weights: Optional[tuple[float, ...]] = None  # row-major over (depol_q, theta_deg)
    runs_per_channel: int = 50

    def validate(self) -> None:
        _require(len(self.depol_q) > 0, "ensemble.depol_q", "must not be empty")
        _require(len(self.theta_deg) > 0, "ensemble.theta_deg", "must not be empty")
        _require(all(0.0 <= q <= 1.0 for q in self.depol_q), "ensemble.depol_q", "entries must lie in [0, 1]")
        _require(self.runs_per_channel >= 1, "ensemble.runs_per_channel", "must be >= 1")
        if self.weights is not None:
            size = len(self.depol_q) * len(self.theta_deg)
            _require(len(self.weights) == size, "ensemble.weights", f"expected {size} entries")
            _require(all(w >= 0 for w in self.weights), "ensemble.weights", "must be nonnegative")
            _require(abs(sum(self.weights) - 1.0) <= 1e-12, "ensemble.weights", "must sum to 1")

    def ensemble(self) -> ChannelEnsemble:
        if self.weights is None:
            return ChannelEnsemble.grid(self.depol_q, self.theta_deg)
        channels = [ChannelParams.from_degrees(q, th) for q in self.depol_q for th in self.theta_deg]
        return ChannelEnsemble(tuple(zip(channels, self.weights)))

    def best_channel(self) -> ChannelParams:
        """Least depolarization and least misalignment: the fixed-length baseline centre."""
        return ChannelParams.from_degrees(min(self.depol_q), min(self.theta_deg, key=abs))


@dataclass(frozen=True)
class SimulationConfig:
    trials: int = 10_000
    full_trials: int = 100_000
    seed: int = 20230601
    workers: int = 1
    dominance_samples: int = 10_000

    def validate(self) -> None:
        _require(self.trials >= 1, "simulation.trials", "must be >= 1")
        _require(self.full_trials >= 1, "simulation.full_trials", "must be >= 1")
        _require(0 <= self.seed < 2**64, "simulation.seed", "must be an unsigned 64-bit integer")
        _require(self.workers >= 1, "simulation.workers", "must be >= 1")
        _require(self.dominance_samples >= 1, "simulation.dominance_samples", "must be >= 1")


@dataclass(frozen=True)
class OptimizerConfig:
    tol: float = 1e-5
    method: str = "barrier"
    correction_base: str = "2dz+1"

    def validate(self) -> None:
        _require(self.tol > 0, "optimizer.tol", "must be positive")
        _require(self.method in OPTIMIZER_METHODS, "optimizer.method", f"must be one of {OPTIMIZER_METHODS}")
        _require(
            self.correction_base in CORRECTION_BASES,
            "optimizer.correction_base",
            f"must be one of {CORRECTION_BASES}",
        )


@dataclass(frozen=True)
class HashingConfig:
    out_len: int = 16
    same_length_in: int = 64
    draws: int = 1_000_000
    zero_lengths: tuple[int, int] = (10, 20)
    uniformity_out_len: int = 8
    uniformity_in_len: int = 20
    uniformity_draws: int = 1_000_000

    def validate(self) -> None:
        _require(self.out_len >= 1, "hashing.out_len", "must be >= 1")
        _require(self.same_length_in >= self.out_len, "hashing.same_length_in", "must be >= hashing.out_len")
        _require(self.draws >= 1, "hashing.draws", "must be >= 1")
        _require(len(self.zero_lengths) == 2, "hashing.zero_lengths", "expected two lengths")
        a, b = self.zero_lengths
        _require(a != b and min(a, b) >= 1, "hashing.zero_lengths", "need two distinct positive lengths")
        _require(1 <= self.uniformity_out_len <= 20, "hashing.uniformity_out_len", "must lie in [1, 20]")
        _require(self.uniformity_in_len >= 1, "hashing.uniformity_in_len", "must be >= 1")
        _require(self.uniformity_draws >= 1, "hashing.uniformity_draws", "must be >= 1")


_SECTIONS = {
    "protocol": ProtocolConfig,
    "security": SecurityConfig,
    "ladder": LadderConfig,
    "channel": ChannelConfig,
    "ensemble": EnsembleConfig,
    "simulation": SimulationConfig,
    "optimizer": OptimizerConfig,
    "hashing": HashingConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    security: SecurityConfig = field(default_factory=SecurityConfig)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    hashing: HashingConfig = field(default_factory=HashingConfig)
    output_dir: str = "results"

    def __post_init__(self) -> None:
        for name in _SECTIONS:
            getattr(self, name).validate()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        unknown = set(data) - set(_SECTIONS) - {"output_dir"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section or key")
        kwargs: dict[str, Any] = {}
        for name, section_cls in _SECTIONS.items():
            if name in data:
                if not isinstance(data[name], dict):
                    raise ConfigError(name, "expected a table")
                kwargs[name] = _build(section_cls, data[name], name)
        if "output_dir" in data:
            kwargs["output_dir"] = str(data["output_dir"])
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError("--config", f"file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("--config", f"invalid TOML: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(
        self,
        seed: Optional[int] = None,
        trials: Optional[int] = None,
        full: bool = False,
        output_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        sim = self.simulation
        if full:
            sim = dataclasses.replace(sim, trials=sim.full_trials)
        if trials is not None:
            sim = dataclasses.replace(sim, trials=trials)
        if seed is not None:
            sim = dataclasses.replace(sim, seed=seed)
        out = self.output_dir if output_dir is None else output_dir
        return dataclasses.replace(self, simulation=sim, output_dir=out)

    # derived objects

    def params(self) -> ProtocolParams:
        return self.protocol.params()

    def radii(self) -> tuple[float, ...]:
        return self.ladder.grid()


def _build(section_cls: type, values: dict[str, Any], prefix: str):
    names = {f.name: f for f in dataclasses.fields(section_cls)}
    kwargs: dict[str, Any] = {}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
        if section_cls is SecurityConfig and key in ("fixed", "variable"):
            value = _split(value, f"{prefix}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        section = section_cls(**kwargs)
        section.validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix, str(exc)) from exc
    return section


def _split(value: Any, prefix: str) -> SplitConfig:
    if isinstance(value, str):
        return SplitConfig(value)
    if not isinstance(value, dict):
        raise ConfigError(prefix, "expected a preset name or a table")
    allowed = {f.name for f in dataclasses.fields(SplitConfig)}
    for key in value:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    return SplitConfig(**{"policy": "custom", **value})
