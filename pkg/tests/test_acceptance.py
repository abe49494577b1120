"""End-to-end acceptance criteria, each at its stated tolerance and scale.

Every test prints one ``criterion N [PASS|FAIL]`` line; the lines are also
repeated in the pytest terminal summary.
"""
import dataclasses
import math
import time

import numpy as np
import pytest

import oracles
from conftest import random_state
from test_entropy_opt import feasible_state
from vlqkd import runner
from vlqkd.bb84 import Bb84Setup, ChannelParams, born_distribution, honest_state
from vlqkd.config import ExperimentConfig
from vlqkd.entropy_opt import FeasibleSpec, bb84_key_channel, gradient, minimize_entropy, objective
from vlqkd.finite_size import (
    ProtocolParams,
    RenyiParams,
    SecurityBudget,
    key_length_fixed,
    mu,
    renyi_correction,
    theta,
)
from vlqkd.protocol import OptimizationCache, build_ladder, honest_leak, per_sample_dominance
from vlqkd.rng import generator

SETUP = Bb84Setup(0.5)
HONEST = ChannelParams.from_degrees(0.02, 2.0)


def combined(*errs: float) -> float:
    return math.sqrt(sum(e * e for e in errs))


@pytest.fixture(scope="module")
def default_config(tmp_path_factory):
    return ExperimentConfig().with_overrides(output_dir=str(tmp_path_factory.mktemp("acceptance")))


@pytest.fixture(scope="module")
def fig1_run(default_config):
    start = time.perf_counter()
    result = runner.run_fig1(default_config)
    return result, time.perf_counter() - start


@pytest.fixture(scope="module")
def fig2_run(default_config):
    start = time.perf_counter()
    result = runner.run_fig2(default_config)
    return result, time.perf_counter() - start


def test_criterion_1_fixed_length_monotonicity(fig1_run, criterion):
    result, elapsed = fig1_run
    rates = result.fixed.rates
    violations = int(np.count_nonzero(np.diff(rates) > 0))
    per_opt = elapsed / (2 * len(rates))
    ok = violations == 0 and elapsed <= 600 and per_opt <= 30
    criterion(1, "R_fixed non-increasing in t", ok,
              f"{violations} violations over {len(rates)} rungs, R_fixed {rates[0]:.5f} -> {rates[-1]:.5f}, "
              f"{elapsed:.1f}s total")


def test_criterion_2_variable_dominates_known_channel(fig1_run, criterion):
    result, elapsed = fig1_run
    means = np.array([e.mean for e in result.fixed_rates])
    best = int(np.argmax(means))
    best_est = result.fixed_rates[best]
    var = result.variable_rate
    sigma = combined(var.stderr, best_est.stderr)
    rise_fall = 0 < best < len(means) - 1 and means[0] < means[best] and means[-1] < means[best]
    ok = var.mean >= best_est.mean - 3 * sigma and rise_fall and result.trials >= 10_000 and elapsed <= 1800
    criterion(2, "Rbar_variable >= max Rbar_fixed - 3 sigma", ok,
              f"Rbar_variable={var.mean:.6f}+-{var.stderr:.1e}, max Rbar_fixed={best_est.mean:.6f} "
              f"at t={result.radii[best]:.3f}, rise-then-fall={rise_fall}, trials={result.trials}")


def test_criterion_3_variable_dominates_ensemble(fig2_run, criterion):
    result, elapsed = fig2_run
    best = result.best_fixed
    var = result.variable_rate
    sigma = combined(var.stderr, best.stderr)
    channels = len({s.channel for s in result.samples})
    ok = var.mean - best.mean >= 3 * sigma and channels == 20 and len(result.samples) == 1000 and elapsed <= 2700
    criterion(3, "ensemble Rbar_variable > max Rbar_fixed by 3 sigma", ok,
              f"Rbar_variable={var.mean:.6f}+-{var.stderr:.1e}, max Rbar_fixed={best.mean:.6f}+-{best.stderr:.1e}, "
              f"margin {(var.mean - best.mean) / sigma:.1f} sigma, {elapsed:.0f}s")


def test_criterion_4_per_sample_dominance(default_config, criterion):
    params = default_config.params()
    budget = default_config.security.variable_budget()
    center = born_distribution(honest_state(SETUP, HONEST), SETUP)
    leak = honest_leak(SETUP, HONEST, params)
    cache = OptimizationCache(bb84_key_channel(SETUP))
    ladder = build_ladder(center, default_config.radii(), leak, params, budget, SETUP, cache)
    report = per_sample_dominance(ladder, HONEST, params, budget, SETUP,
                                  samples=default_config.simulation.dominance_samples, seed=4)
    total = report.checked + report.aborted
    ok = report.violations == 0 and total >= 10_000 and report.checked > 0
    criterion(4, "l(F_obs) >= l_i on every accepted sample", ok,
              f"{report.violations} violations, {report.checked} accepted, {report.aborted} aborted, "
              f"min margin {report.min_margin} bits")


def test_criterion_5_optimizer_correctness(criterion):
    start = time.perf_counter()
    ch = bb84_key_channel(SETUP)
    perfect = born_distribution(honest_state(SETUP, ChannelParams(0.0, 0.0)), SETUP)
    anchor = minimize_entropy(FeasibleSpec.for_setup(SETUP, perfect, 0.0), ch)
    ok_a = abs(anchor.certified_lower - 0.25) <= 1e-3 and abs(anchor.upper_value - 0.25) <= 1e-3

    rng = np.random.default_rng(55)
    rho = 0.8 * random_state(rng) + 0.2 * np.eye(4) / 4
    grad = gradient(rho, ch)
    worst = 0.0
    for _ in range(10):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        d = (h + h.conj().T) / np.linalg.norm(h + h.conj().T)
        step = 1e-5
        fd = (objective(rho + step * d, ch) - objective(rho - step * d, ch)) / (2 * step)
        analytic = float(np.trace(grad @ d).real)
        worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-12))
    ok_b = worst <= 1e-5

    center = born_distribution(honest_state(SETUP, HONEST), SETUP)
    spec = FeasibleSpec.for_setup(SETUP, center, 0.1)
    res = minimize_entropy(spec, ch)
    anchor_state = honest_state(SETUP, HONEST).mat
    unsound = 0
    for _ in range(20):
        sigma = feasible_state(rng, spec, anchor_state)
        unsound += res.certified_lower > objective(sigma, ch)
    ok_c = unsound == 0
    elapsed = time.perf_counter() - start
    criterion(5, "optimizer anchor, gradient, certificate", ok_a and ok_b and ok_c and elapsed <= 120,
              f"(a) {anchor.certified_lower:.6f}, (b) worst rel err {worst:.1e}, (c) {unsound} violations, "
              f"{elapsed:.1f}s")


def test_criterion_6_concentration_bound(criterion):
    start = time.perf_counter()
    eps, m, trials = 0.1, 1000, 100_000
    radius = mu(m, 4, eps)
    worst = 0.0
    for fbar in (np.full(4, 0.25), np.array([0.49, 0.01, 0.01, 0.49]), np.array([0.7, 0.2, 0.08, 0.02])):
        counts = generator(6).multinomial(m, fbar, size=trials)
        dist = np.abs(counts / m - fbar).sum(axis=1)
        worst = max(worst, float(np.mean(dist >= radius)))
    elapsed = time.perf_counter() - start
    criterion(6, "Pr(||F_obs - F|| >= mu) <= eps_AT", worst <= eps and elapsed <= 60,
              f"mu={radius:.4f}, worst empirical tail {worst:.2e} over {trials} trials")


def test_criterion_7_hashing_suite(default_config, criterion):
    start = time.perf_counter()
    report = runner.run_hash_report(default_config)
    elapsed = time.perf_counter() - start
    p = 2.0**-16
    same, naive, virtual = report.same_length, report.naive_variable, report.virtual_variable
    ok = (
        same.draws == 1_000_000 and same.rate <= p + 5 * math.sqrt(p * (1 - p) / same.draws)
        and naive.rate == 1.0
        and abs(virtual.rate - p) <= 5 * math.sqrt(p * (1 - p) / virtual.draws)
        and report.uniformity.p_value >= 0.01
        and elapsed <= 300
    )
    criterion(7, "Toeplitz universality, counterexample, virtual fix", ok,
              f"same {same.rate:.2e}, naive {naive.rate}, virtual {virtual.rate:.2e}, "
              f"chi2 p={report.uniformity.p_value:.3f}, {elapsed:.1f}s")


def test_criterion_8_finite_size_arithmetic(criterion):
    worst = 0.0
    params = ProtocolParams.from_fraction(1_000_000, 0.05)
    n = params.n
    for budget in (SecurityBudget.fixed_preset(1e-12), SecurityBudget.variable_preset(1e-12)):
        rp = RenyiParams.from_budget(n, budget.eps_PA, params.d_Z)
        pairs = [
            (mu(params.m, 16, budget.eps_AT), oracles.mu(params.m, 16, budget.eps_AT)),
            (rp.alpha, oracles.alpha(n, budget.eps_PA)),
            (theta(rp, budget.eps_PA, budget.eps_EV), oracles.theta(n, budget.eps_PA, budget.eps_EV)),
        ]
        for entropy, leak in ((0.2298, 24411), (0.2, 30000), (0.15, 24411)):
            assembled = n * entropy - renyi_correction(n, rp) - leak - theta(rp, budget.eps_PA, budget.eps_EV)
            reference = n * oracles.mp.mpf(entropy) - oracles.correction(n, budget.eps_PA) - leak \
                - oracles.theta(n, budget.eps_PA, budget.eps_EV)
            pairs.append((assembled, reference))
            decided = key_length_fixed(entropy, leak, params, budget).l
            if decided != oracles.key_length(entropy, leak, n, budget.eps_PA, budget.eps_EV):
                worst = math.inf
        for value, ref in pairs:
            worst = max(worst, abs(value - float(ref)) / abs(float(ref)))
    doubling = all(
        b.eps_secure_variable <= 2 * b.eps_secure_fixed
        for b in (SecurityBudget(a, p, e) for a in (1e-13, 1e-6, 0.3) for p in (1e-12, 0.2) for e in (1e-9, 0.1))
    )
    criterion(8, "finite-size arithmetic to 10 digits", worst < 1e-10 and doubling,
              f"worst relative deviation {worst:.1e}, variable eps <= 2x fixed: {doubling}")


def test_criterion_9_determinism(default_config, fig1_run, fig2_run, tmp_path, criterion):
    rerun_cfg = default_config.with_overrides(output_dir=str(tmp_path))
    fig1_again = runner.run_fig1(rerun_cfg)
    fig2_again = runner.run_fig2(rerun_cfg)
    first_dir = default_config.output_dir
    same = all(
        (tmp_path / name).read_bytes() == open(f"{first_dir}/{name}", "rb").read()
        for name in ("fig1.csv", "fig2.csv", "fig2_variable.csv")
    )
    same = same and fig1_again.files == fig1_run[0].files and fig2_again.files == fig2_run[0].files
    criterion(9, "byte-identical reruns", same, "fig1.csv, fig2.csv, fig2_variable.csv compared")
