import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from vlqkd.bb84 import Bb84Setup, ChannelParams, born_distribution, honest_state
from vlqkd.entropy_opt import bb84_key_channel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def setup():
    return Bb84Setup(0.5)


@pytest.fixture(scope="session")
def key_channel(setup):
    return bb84_key_channel(setup)


@pytest.fixture(scope="session")
def fig1_center(setup):
    return born_distribution(honest_state(setup, ChannelParams.from_degrees(0.02, 2.0)), setup)


def random_state(rng: np.random.Generator, dim: int = 4, rank: int | None = None) -> np.ndarray:
    a = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line, then assert the outcome."""

    def check(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
