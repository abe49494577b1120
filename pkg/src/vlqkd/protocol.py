"""Acceptance ladders, the variable-length partition and Monte Carlo key rates."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .bb84 import (
    Bb84Setup,
    ChannelParams,
    FrequencyVector,
    born_distribution,
    ec_conditional_entropy,
    honest_state,
    sample_counts,
)
from .entropy_opt import FeasibleSpec, KrausChannel, OptResult, Status, bb84_key_channel, minimize_entropy
from .finite_size import (
    LengthDecision,
    ProtocolParams,
    SecurityBudget,
    ec_leak,
    key_length_fixed,
    mu,
    variable_length_decision,
)
from .rng import task_generator


@dataclass(frozen=True)
class AcceptanceLadder:
    center: FrequencyVector
    radii: tuple[float, ...]

    def __post_init__(self) -> None:
        radii = tuple(float(r) for r in self.radii)
        if not radii:
            raise ValueError("ladder needs at least one radius")
        if any(r < 0 for r in radii) or any(b < a for a, b in zip(radii, radii[1:])):
            raise ValueError("ladder radii must be nonnegative and sorted")
        object.__setattr__(self, "radii", radii)

    def accept_index(self, fobs: FrequencyVector | np.ndarray) -> Optional[int]:
        """Smallest (0-based) rung whose ball contains ``fobs``; None means abort."""
        probs = fobs.probs if isinstance(fobs, FrequencyVector) else np.asarray(fobs)
        return _first_rung(float(np.abs(probs - self.center.probs).sum()), self.radii)


def _first_rung(distance: float, radii: Sequence[float]) -> Optional[int]:
    idx = int(np.searchsorted(radii, distance, side="left"))
    return idx if idx < len(radii) else None


def accept_index(fobs: FrequencyVector, ladder: AcceptanceLadder) -> Optional[int]:
    return ladder.accept_index(fobs)


class OptimizationCache:
    """Exact-match memo of minimize_entropy keyed by (center bytes, radius)."""

    def __init__(self, ch: KrausChannel, tol: float = 1e-5, method: str = "barrier"):
        self.ch = ch
        self.tol = tol
        self.method = method
        self._store: dict[tuple[bytes, float], OptResult] = {}

    def __call__(self, spec: FeasibleSpec) -> OptResult:
        key = (spec.center.digest(), float(spec.radius))
        if key not in self._store:
            self._store[key] = minimize_entropy(spec, self.ch, self.tol, self.method)
        return self._store[key]

    def __len__(self) -> int:
        return len(self._store)


@dataclass(frozen=True)
class Rung:
    t: float
    radius: float
    opt: OptResult
    decision: LengthDecision
    N: int

    @property
    def rate(self) -> float:
        return self.decision.l / self.N


@dataclass(frozen=True)
class VariableLadder:
    ladder: AcceptanceLadder
    rungs: tuple[Rung, ...]

    def __post_init__(self) -> None:
        if len(self.rungs) != len(self.ladder.radii):
            raise ValueError("one rung per ladder radius is required")
        totals = [r.decision.l + r.decision.leak for r in self.rungs]
        if any(b > a for a, b in zip(totals, totals[1:])):
            raise ValueError("l_i + leak_i must be non-increasing along the ladder")

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.rungs])


def build_ladder(
    center: FrequencyVector,
    radii: Sequence[float],
    leak: int,
    params: ProtocolParams,
    budget: SecurityBudget,
    setup: Bb84Setup,
    solve: Callable[[FeasibleSpec], OptResult],
    sigma_size: int = 16,
    correction_base: str = "2dz+1",
) -> VariableLadder:
    """Fixed-length key length for each rung, using feasible radius t_i + mu."""
    ladder = AcceptanceLadder(center, tuple(radii))
    margin = mu(params.m, sigma_size, budget.eps_AT)
    rungs = []
    for t in ladder.radii:
        spec = FeasibleSpec.for_setup(setup, center, t + margin)
        opt = solve(spec)
        if opt.status is Status.INFEASIBLE:
            decision = LengthDecision(0, leak)
        else:
            decision = key_length_fixed(opt.certified_lower, leak, params, budget, correction_base)
        rungs.append(Rung(t, t + margin, opt, decision, params.N))
    return VariableLadder(ladder, tuple(rungs))


@dataclass(frozen=True)
class RateEstimate:
    mean: float
    stderr: float

    def __iter__(self):
        yield self.mean
        yield self.stderr


def sample_distances(
    source: FrequencyVector, center: FrequencyVector, m: int, trials: int, seed: int, stream: int = 0
) -> np.ndarray:
    """1-norm distances of ``trials`` sampled frequency vectors to ``center``."""
    out = np.empty(trials)
    for k in range(trials):
        counts = sample_counts(source, m, task_generator(seed, stream, k))
        out[k] = np.abs(counts / m - center.probs).sum()
    return out


def acceptance_indices(distances: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    """First accepting rung per trial, -1 for abort."""
    idx = np.searchsorted(np.asarray(radii), distances, side="left")
    return np.where(idx < len(radii), idx, -1)


def fixed_rates_from_indices(indices: np.ndarray, rates: np.ndarray) -> list[RateEstimate]:
    """R_i times the acceptance frequency of rung i (accepting at or below i)."""
    trials = len(indices)
    out = []
    for i, rate in enumerate(rates):
        p = float(np.count_nonzero((indices >= 0) & (indices <= i))) / trials
        out.append(RateEstimate(p * rate, rate * math.sqrt(p * (1 - p) / trials)))
    return out


def variable_rate_from_indices(indices: np.ndarray, rates: np.ndarray) -> RateEstimate:
    per_trial = np.where(indices >= 0, np.asarray(rates)[np.clip(indices, 0, None)], 0.0)
    spread = per_trial.std(ddof=1) / math.sqrt(len(per_trial)) if len(per_trial) > 1 else 0.0
    return RateEstimate(float(per_trial.mean()), float(spread))


def expected_rate_fixed(
    ladder: VariableLadder, i: int, honest: ChannelParams, setup: Bb84Setup, m: int, trials: int, seed: int
) -> RateEstimate:
    source = born_distribution(honest_state(setup, honest), setup)
    dist = sample_distances(source, ladder.ladder.center, m, trials, seed)
    return fixed_rates_from_indices(acceptance_indices(dist, ladder.ladder.radii), ladder.rates)[i]


def expected_rate_variable_ladder(
    ladder: VariableLadder, honest: ChannelParams, setup: Bb84Setup, m: int, trials: int, seed: int
) -> RateEstimate:
    source = born_distribution(honest_state(setup, honest), setup)
    dist = sample_distances(source, ladder.ladder.center, m, trials, seed)
    return variable_rate_from_indices(acceptance_indices(dist, ladder.ladder.radii), ladder.rates)


@dataclass(frozen=True)
class ChannelEnsemble:
    members: tuple[tuple[ChannelParams, float], ...]

    def __post_init__(self) -> None:
        weights = np.array([w for _, w in self.members], dtype=float)
        if len(weights) == 0:
            raise ValueError("ensemble is empty")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("ensemble weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, channels: Iterable[ChannelParams]) -> "ChannelEnsemble":
        channels = list(channels)
        return cls(tuple((c, 1.0 / len(channels)) for c in channels))

    @classmethod
    def grid(cls, depol: Sequence[float], theta_deg: Sequence[float]) -> "ChannelEnsemble":
        return cls.uniform(ChannelParams.from_degrees(q, th) for q in depol for th in theta_deg)

    @property
    def channels(self) -> list[ChannelParams]:
        return [c for c, _ in self.members]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members])


@dataclass(frozen=True)
class VariableSample:
    channel: int
    run: int
    distance: float
    decision: LengthDecision
    lower: Optional[float]


@dataclass
class _SampleTask:
    """Everything one worker needs to evaluate a batch of variable-length samples."""

    setup_p_z: float
    params: ProtocolParams
    budget: SecurityBudget
    fixed_center: np.ndarray
    tol: float
    method: str
    correction_base: str
    seed: int
    m: int
    jobs: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    constant_leak: Optional[Sequence[Optional[int]]] = None
    fixed_radii: Sequence[float] = ()


def _constant_leak(value: int) -> Callable[[FrequencyVector], int]:
    def leak(_fobs: FrequencyVector) -> int:
        return value

    return leak


def _run_sample_task(task: _SampleTask) -> list[VariableSample]:
    setup = Bb84Setup(task.setup_p_z)
    ch = bb84_key_channel(setup)
    center = task.fixed_center
    out = []
    for channel, run, source in task.jobs:
        counts = sample_counts(FrequencyVector(source), task.m, task_generator(task.seed, channel, run))
        fobs = FrequencyVector(counts / task.m)
        distance = float(np.abs(fobs.probs - center).sum())
        leak_fn = None
        if task.constant_leak is not None:
            rung = _first_rung(distance, task.fixed_radii)
            if rung is None or task.constant_leak[rung] is None:
                out.append(VariableSample(channel, run, distance, LengthDecision(0, 0), None))
                continue
            leak_fn = _constant_leak(int(task.constant_leak[rung]))
        captured: dict[str, OptResult] = {}

        def solve(spec: FeasibleSpec) -> OptResult:
            captured["opt"] = minimize_entropy(spec, ch, task.tol, task.method)
            return captured["opt"]

        decision = variable_length_decision(
            fobs, task.params, task.budget, ch, setup, leak_fn=leak_fn,
            correction_base=task.correction_base, solve=solve,
        )
        opt = captured.get("opt")
        lower = opt.certified_lower if opt and opt.status is not Status.INFEASIBLE else None
        out.append(VariableSample(channel, run, distance, decision, lower))
    return out


def run_variable_samples(
    task: _SampleTask, workers: int = 1, chunk: int = 25
) -> list[VariableSample]:
    """Evaluate all jobs of ``task``; results come back in job order regardless of workers."""
    jobs = task.jobs
    batches = [jobs[i : i + chunk] for i in range(0, len(jobs), chunk)]
    subtasks = []
    for batch in batches:
        sub = _SampleTask(**{**task.__dict__, "jobs": batch})
        subtasks.append(sub)
    if workers <= 1:
        results = [_run_sample_task(s) for s in subtasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sample_task, subtasks))
    return [sample for batch in results for sample in batch]


def expected_rate_true_variable(
    ensemble: ChannelEnsemble,
    params: ProtocolParams,
    budget: SecurityBudget,
    setup: Bb84Setup,
    runs_per_channel: int,
    seed: int,
    tol: float = 1e-5,
    method: str = "barrier",
    correction_base: str = "2dz+1",
    fixed_center: Optional[FrequencyVector] = None,
    workers: int = 1,
) -> tuple[RateEstimate, list[VariableSample]]:
    """Average of l(F_obs)/N over the ensemble, sampling each member ``runs_per_channel`` times."""
    center = fixed_center.probs if fixed_center is not None else np.full(16, 1 / 16)
    task = _SampleTask(setup.p_z, params, budget, center, tol, method, correction_base, seed, params.m)
    for j, (channel, weight) in enumerate(ensemble.members):
        if weight == 0:
            continue
        source = born_distribution(honest_state(setup, channel), setup).probs
        task.jobs.extend((j, run, source) for run in range(runs_per_channel))
    samples = run_variable_samples(task, workers)
    weights = ensemble.weights
    mean, var = 0.0, 0.0
    for j in range(len(ensemble.members)):
        rates = np.array([s.decision.l / params.N for s in samples if s.channel == j])
        if len(rates) == 0:
            continue
        mean += weights[j] * rates.mean()
        if len(rates) > 1:
            var += weights[j] ** 2 * rates.var(ddof=1) / len(rates)
    return RateEstimate(float(mean), math.sqrt(var)), samples


def ensemble_fixed_rates(
    samples: Sequence[VariableSample], ensemble: ChannelEnsemble, ladder: VariableLadder
) -> list[RateEstimate]:
    """R_fixed,i weighted by each member's acceptance probability of rung i."""
    weights = ensemble.weights
    out = []
    radii = np.asarray(ladder.ladder.radii)
    for i, rate in enumerate(ladder.rates):
        mean, var = 0.0, 0.0
        for j in range(len(ensemble.members)):
            dist = np.array([s.distance for s in samples if s.channel == j])
            if len(dist) == 0:
                continue
            p = float(np.mean(dist <= radii[i]))
            mean += weights[j] * p * rate
            var += (weights[j] * rate) ** 2 * p * (1 - p) / len(dist)
        out.append(RateEstimate(mean, math.sqrt(var)))
    return out


@dataclass(frozen=True)
class DominanceReport:
    checked: int
    aborted: int
    violations: int
    min_margin: Optional[int]
    samples: tuple[VariableSample, ...] = field(repr=False)


def per_sample_dominance(
    ladder: VariableLadder,
    honest: ChannelParams,
    params: ProtocolParams,
    budget: SecurityBudget,
    setup: Bb84Setup,
    samples: int,
    seed: int,
    tol: float = 1e-5,
    method: str = "barrier",
    correction_base: str = "2dz+1",
    workers: int = 1,
) -> DominanceReport:
    """Compare l(F_obs) with the fixed rung l_i on every sample the ladder accepts.

    Both decisions use ``budget`` and the rung's leak, so only the feasible
    sets differ: the ball of radius mu around F_obs versus t_i + mu around F.
    """
    source = born_distribution(honest_state(setup, honest), setup).probs
    task = _SampleTask(
        setup.p_z, params, budget, ladder.ladder.center.probs, tol, method, correction_base,
        seed, params.m,
        constant_leak=[r.decision.leak for r in ladder.rungs],
        fixed_radii=ladder.ladder.radii,
    )
    task.jobs.extend((0, run, source) for run in range(samples))
    results = run_variable_samples(task, workers)
    checked = aborted = violations = 0
    min_margin: Optional[int] = None
    for s in results:
        rung = _first_rung(s.distance, ladder.ladder.radii)
        if rung is None:
            aborted += 1
            continue
        checked += 1
        margin = s.decision.l - ladder.rungs[rung].decision.l
        violations += margin < 0
        min_margin = margin if min_margin is None else min(min_margin, margin)
    return DominanceReport(checked, aborted, violations, min_margin, tuple(results))


def honest_leak(setup: Bb84Setup, honest: ChannelParams, params: ProtocolParams) -> int:
    fbar = born_distribution(honest_state(setup, honest), setup)
    return ec_leak(ec_conditional_entropy(fbar), params)
