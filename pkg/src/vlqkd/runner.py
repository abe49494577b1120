"""Batch pipelines behind the CLI: key-rate curves, hashing report, persistence."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .bb84 import Bb84Setup, FrequencyVector, born_distribution, honest_state, sample_frequencies
from .config import ExperimentConfig
from .entropy_opt import InfeasibleError, Status, bb84_key_channel, minimize_entropy
from .finite_size import LengthDecision, mu, variable_length_decision
from .hashing import (
    CollisionReport,
    UniformityReport,
    same_length_collisions,
    variable_length_collisions,
    virtual_output_uniformity,
)
from .protocol import (
    OptimizationCache,
    RateEstimate,
    VariableLadder,
    VariableSample,
    acceptance_indices,
    build_ladder,
    ensemble_fixed_rates,
    expected_rate_true_variable,
    fixed_rates_from_indices,
    honest_leak,
    sample_distances,
    variable_rate_from_indices,
)
from .rng import task_generator

FIG1_COLUMNS = ("t_i", "R_fixed_i", "Rbar_fixed_i", "stderr_fixed", "Rbar_variable", "stderr_variable")
FIG2_COLUMNS = ("t_i", "R_fixed_i", "Rbar_fixed_i", "stderr")
FIG2_VARIABLE_COLUMNS = ("Rbar_variable", "stderr", "channels", "runs_per_channel")


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def code_version() -> str:
    """Package version plus a digest of the module sources."""
    digest = hashlib.sha256()
    for src in sorted(Path(__file__).parent.glob("*.py")):
        digest.update(src.name.encode())
        digest.update(src.read_bytes())
    return f"{__version__}+{digest.hexdigest()[:12]}"


def write_manifest(
    cfg: ExperimentConfig, experiment: str, outputs: dict[str, str], extra: Optional[dict] = None
) -> Path:
    manifest = {
        "experiment": experiment,
        "seed": cfg.simulation.seed,
        "config": json.loads(cfg.canonical_json()),
        "config_sha256": cfg.sha256(),
        "code_version": code_version(),
        "outputs": {name: _sha256(text) for name, text in sorted(outputs.items())},
    }
    if extra:
        manifest.update(extra)
    return atomic_write_text(
        Path(cfg.output_dir) / f"{experiment}_manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _persist(cfg: ExperimentConfig, experiment: str, files: dict[str, str], extra: Optional[dict] = None) -> list[Path]:
    out = Path(cfg.output_dir)
    paths = [atomic_write_text(out / name, text) for name, text in files.items()]
    paths.append(write_manifest(cfg, experiment, files, extra))
    return paths


# --------------------------------------------------------------------------
# key-rate pipelines
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Fig1Result:
    radii: tuple[float, ...]
    leak: int
    fixed: VariableLadder
    variable: VariableLadder
    fixed_rates: tuple[RateEstimate, ...]
    variable_rate: RateEstimate
    trials: int
    files: dict[str, str] = field(repr=False)

    @property
    def best_fixed(self) -> RateEstimate:
        return max(self.fixed_rates, key=lambda e: e.mean)


def _ladders(cfg: ExperimentConfig, center: FrequencyVector, leak: int, setup: Bb84Setup):
    params = cfg.params()
    cache = OptimizationCache(bb84_key_channel(setup), cfg.optimizer.tol, cfg.optimizer.method)
    common = dict(setup=setup, solve=cache, correction_base=cfg.optimizer.correction_base)
    fixed = build_ladder(center, cfg.radii(), leak, params, cfg.security.fixed_budget(), **common)
    variable = build_ladder(center, cfg.radii(), leak, params, cfg.security.variable_budget(), **common)
    return fixed, variable


def run_fig1(cfg: ExperimentConfig, write: bool = True) -> Fig1Result:
    """Known-channel comparison of fixed-length rungs with the variable-length protocol."""
    setup = Bb84Setup(cfg.protocol.p_z)
    params = cfg.params()
    honest = cfg.channel.params()
    center = born_distribution(honest_state(setup, honest), setup)
    leak = honest_leak(setup, honest, params)
    fixed, variable = _ladders(cfg, center, leak, setup)

    trials = cfg.simulation.trials
    dist = sample_distances(center, center, params.m, trials, cfg.simulation.seed)
    idx = acceptance_indices(dist, fixed.ladder.radii)
    fixed_rates = fixed_rates_from_indices(idx, fixed.rates)
    var_rate = variable_rate_from_indices(idx, variable.rates)

    rows = [
        (t, r, e.mean, e.stderr, var_rate.mean, var_rate.stderr)
        for t, r, e in zip(fixed.ladder.radii, fixed.rates, fixed_rates)
    ]
    files = {"fig1.csv": csv_text(FIG1_COLUMNS, rows)}
    if write:
        _persist(cfg, "fig1", files, {"trials": trials})
    return Fig1Result(
        fixed.ladder.radii, leak, fixed, variable, tuple(fixed_rates), var_rate, trials, files
    )


@dataclass(frozen=True)
class Fig2Result:
    radii: tuple[float, ...]
    leak: int
    fixed: VariableLadder
    fixed_rates: tuple[RateEstimate, ...]
    variable_rate: RateEstimate
    samples: tuple[VariableSample, ...] = field(repr=False)
    files: dict[str, str] = field(repr=False)

    @property
    def best_fixed(self) -> RateEstimate:
        return max(self.fixed_rates, key=lambda e: e.mean)


def run_fig2(cfg: ExperimentConfig, write: bool = True) -> Fig2Result:
    """Unpredictable-channel ensemble: fixed-length curve against the per-sample variable protocol."""
    setup = Bb84Setup(cfg.protocol.p_z)
    params = cfg.params()
    ensemble = cfg.ensemble.ensemble()
    best = cfg.ensemble.best_channel()
    center = born_distribution(honest_state(setup, best), setup)
    leak = honest_leak(setup, best, params)
    cache = OptimizationCache(bb84_key_channel(setup), cfg.optimizer.tol, cfg.optimizer.method)
    fixed = build_ladder(
        center, cfg.radii(), leak, params, cfg.security.fixed_budget(), setup, cache,
        correction_base=cfg.optimizer.correction_base,
    )
    var_rate, samples = expected_rate_true_variable(
        ensemble, params, cfg.security.variable_budget(), setup,
        cfg.ensemble.runs_per_channel, cfg.simulation.seed,
        tol=cfg.optimizer.tol, method=cfg.optimizer.method,
        correction_base=cfg.optimizer.correction_base,
        fixed_center=center, workers=cfg.simulation.workers,
    )
    fixed_rates = ensemble_fixed_rates(samples, ensemble, fixed)

    rows = [(t, r, e.mean, e.stderr) for t, r, e in zip(fixed.ladder.radii, fixed.rates, fixed_rates)]
    scalar = [(var_rate.mean, var_rate.stderr, len(ensemble.members), cfg.ensemble.runs_per_channel)]
    files = {
        "fig2.csv": csv_text(FIG2_COLUMNS, rows),
        "fig2_variable.csv": csv_text(FIG2_VARIABLE_COLUMNS, scalar),
    }
    if write:
        _persist(cfg, "fig2", files)
    return Fig2Result(fixed.ladder.radii, leak, fixed, tuple(fixed_rates), var_rate, tuple(samples), files)


def keyrate_fixed(cfg: ExperimentConfig, write: bool = True) -> dict[str, Any]:
    """Per-rung fixed-length key lengths for the configured honest channel."""
    setup = Bb84Setup(cfg.protocol.p_z)
    params = cfg.params()
    honest = cfg.channel.params()
    center = born_distribution(honest_state(setup, honest), setup)
    leak = honest_leak(setup, honest, params)
    fixed, _ = _ladders(cfg, center, leak, setup)
    report = {
        "channel": {"depol_q": cfg.channel.depol_q, "theta_deg": cfg.channel.theta_deg},
        "leak": leak,
        "mu": mu(params.m, 16, cfg.security.fixed_budget().eps_AT),
        "rungs": [
            {
                "t": r.t,
                "radius": r.radius,
                "l": r.decision.l,
                "rate": r.rate,
                "optimizer": r.opt.to_dict(),
            }
            for r in fixed.rungs
        ],
    }
    if write:
        _persist(cfg, "keyrate_fixed", {"keyrate_fixed.json": json.dumps(report, indent=2) + "\n"})
    return report


def keyrate_variable(
    cfg: ExperimentConfig, fobs: Optional[FrequencyVector] = None, write: bool = True
) -> dict[str, Any]:
    """Variable-length decision for one observed frequency vector.

    Without ``fobs`` a single test sample is drawn from the configured channel.
    Raises InfeasibleError when no state is compatible with the observation.
    """
    setup = Bb84Setup(cfg.protocol.p_z)
    params = cfg.params()
    if fobs is None:
        source = born_distribution(honest_state(setup, cfg.channel.params()), setup)
        fobs = sample_frequencies(source, params.m, (cfg.simulation.seed, 0))
    ch = bb84_key_channel(setup)
    captured = {}

    def solve(spec):
        captured["opt"] = minimize_entropy(spec, ch, cfg.optimizer.tol, cfg.optimizer.method)
        return captured["opt"]

    decision: LengthDecision = variable_length_decision(
        fobs, params, cfg.security.variable_budget(), ch, setup,
        correction_base=cfg.optimizer.correction_base, tol=cfg.optimizer.tol, solve=solve,
    )
    opt = captured["opt"]
    if opt.status is Status.INFEASIBLE:
        raise InfeasibleError("no state is compatible with the observed frequencies")
    report = {
        "fobs": [float(p) for p in fobs.probs],
        "leak": decision.leak,
        "l": decision.l,
        "rate": decision.l / params.N,
        "optimizer": opt.to_dict(),
    }
    if write:
        _persist(cfg, "keyrate_variable", {"keyrate_variable.json": json.dumps(report, indent=2) + "\n"})
    return report


# --------------------------------------------------------------------------
# hashing report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HashReport:
    same_length: CollisionReport
    naive_variable: CollisionReport
    virtual_variable: CollisionReport
    uniformity: UniformityReport

    def to_dict(self) -> dict[str, Any]:
        return {
            "same_length": self.same_length.to_dict(),
            "naive_variable": self.naive_variable.to_dict(),
            "virtual_variable": self.virtual_variable.to_dict(),
            "virtual_uniformity": self.uniformity.to_dict(),
        }


def run_hash_report(cfg: ExperimentConfig, write: bool = True) -> HashReport:
    h = cfg.hashing
    seeds = [int(s) for s in np.random.SeedSequence(cfg.simulation.seed).generate_state(5)]
    rng = task_generator(seeds[0])
    z1 = rng.integers(0, 2, h.same_length_in, dtype=np.uint8)
    z2 = z1.copy()
    z2[int(rng.integers(h.same_length_in))] ^= 1
    zeros_a, zeros_b = (np.zeros(k, dtype=np.uint8) for k in h.zero_lengths)
    probe = rng.integers(0, 2, h.uniformity_in_len, dtype=np.uint8)
    report = HashReport(
        same_length_collisions(z1, z2, h.out_len, h.draws, seeds[1]),
        variable_length_collisions(zeros_a, zeros_b, h.out_len, h.draws, seeds[2], virtual=False),
        variable_length_collisions(zeros_a, zeros_b, h.out_len, h.draws, seeds[3], virtual=True),
        virtual_output_uniformity(probe, h.uniformity_out_len, h.uniformity_draws, seeds[4]),
    )
    if write:
        text = json.dumps(report.to_dict(), indent=2) + "\n"
        _persist(cfg, "hash_report", {"hash_report.json": text})
    return report
