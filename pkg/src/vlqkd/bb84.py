"""Entanglement-based qubit BB84: POVMs, honest channel and test statistics.

Outcome index order (frozen for all file formats): Alice basis (Z < X),
Alice bit, Bob basis, Bob bit, flattened row-major into 16 entries.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .quantum import DensityOperator, partial_trace_matrix, shannon_entropy, tensor
from .rng import generator

N_OUTCOMES = 16
BASES = ("Z", "X")

KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
KET_PLUS = (KET0 + KET1) / math.sqrt(2)
KET_MINUS = (KET0 - KET1) / math.sqrt(2)
PHI_PLUS = (np.kron(KET0, KET0) + np.kron(KET1, KET1)) / math.sqrt(2)


def outcome_index(alice_basis: int, alice_bit: int, bob_basis: int, bob_bit: int) -> int:
    return 8 * alice_basis + 4 * alice_bit + 2 * bob_basis + bob_bit


def outcome_labels() -> list[str]:
    """Column names such as ``Z0_X1`` in index order."""
    return [
        f"{BASES[ab]}{a}_{BASES[bb]}{b}"
        for ab in range(2)
        for a in range(2)
        for bb in range(2)
        for b in range(2)
    ]


def _projector(ket: np.ndarray) -> np.ndarray:
    return np.outer(ket, ket.conj())


def party_povm(p_z: float) -> list[np.ndarray]:
    """[Z0, Z1, X0, X1] elements weighted by the basis-choice probabilities."""
    p_x = 1.0 - p_z
    return [
        p_z * _projector(KET0),
        p_z * _projector(KET1),
        p_x * _projector(KET_PLUS),
        p_x * _projector(KET_MINUS),
    ]


@dataclass(frozen=True)
class Bb84Setup:
    p_z: float = 0.5
    alice_povm: tuple[np.ndarray, ...] = field(init=False, repr=False)
    bob_povm: tuple[np.ndarray, ...] = field(init=False, repr=False)
    sigma_bar_A: DensityOperator = field(init=False, repr=False)
    gammas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.p_z < 1.0:
            raise ValueError(f"p_z must lie in (0, 1), got {self.p_z}")
        povm = tuple(party_povm(self.p_z))
        if np.max(np.abs(sum(povm) - np.eye(2))) > 1e-12:
            raise ValueError("POVM elements do not sum to the identity")
        phi = DensityOperator.from_pure(PHI_PLUS, (2, 2))
        marginal = DensityOperator(partial_trace_matrix(phi.mat, (2, 2), [0]), (2,))
        gammas = np.array([tensor(pa, pb) for pa in povm for pb in povm])
        gammas.setflags(write=False)
        object.__setattr__(self, "alice_povm", povm)
        object.__setattr__(self, "bob_povm", povm)
        object.__setattr__(self, "sigma_bar_A", marginal)
        object.__setattr__(self, "gammas", gammas)

    @property
    def p_x(self) -> float:
        return 1.0 - self.p_z


@dataclass(frozen=True)
class ChannelParams:
    depol_q: float
    misalign_theta: float  # radians

    def __post_init__(self) -> None:
        if not 0.0 <= self.depol_q <= 1.0:
            raise ValueError(f"depolarization probability must lie in [0, 1], got {self.depol_q}")

    @classmethod
    def from_degrees(cls, depol_q: float, theta_deg: float) -> "ChannelParams":
        return cls(depol_q, math.radians(theta_deg))


@dataclass(frozen=True)
class FrequencyVector:
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if probs.shape != (N_OUTCOMES,):
            raise ValueError(f"expected {N_OUTCOMES} entries, got {probs.shape[0]}")
        if np.any(probs < 0):
            raise ValueError("frequencies must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError(f"frequencies sum to {probs.sum()!r}, not 1")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def l1_distance(self, other: "FrequencyVector") -> float:
        return float(np.abs(self.probs - other.probs).sum())

    def to_csv_row(self) -> str:
        return ",".join(repr(float(p)) for p in self.probs)

    def to_json(self) -> str:
        return json.dumps([float(p) for p in self.probs])

    @classmethod
    def from_json(cls, text: str) -> "FrequencyVector":
        return cls(np.array(json.loads(text), dtype=float))

    def digest(self) -> bytes:
        """Exact byte key, used for caching optimizations."""
        return np.ascontiguousarray(self.probs).tobytes()


def misalignment_unitary(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return tensor(np.eye(2), np.array([[c, -s], [s, c]]))


def depolarize_sent(mat: np.ndarray, q: float) -> np.ndarray:
    """(1-q) rho + q Tr_B(rho) (x) I/2, acting on the transmitted qubit."""
    alice = partial_trace_matrix(mat, (2, 2), [0])
    return (1.0 - q) * mat + q * np.kron(alice, np.eye(2) / 2)


def honest_state(setup: Bb84Setup, ch: ChannelParams) -> DensityOperator:
    u = misalignment_unitary(ch.misalign_theta)
    rotated = u @ np.outer(PHI_PLUS, PHI_PLUS.conj()) @ u.conj().T
    mat = depolarize_sent(rotated, ch.depol_q)
    return DensityOperator(0.5 * (mat + mat.conj().T), (2, 2))


def born_probs(rho: np.ndarray, setup: Bb84Setup) -> np.ndarray:
    """Tr(Gamma_j rho) for all j, without validation."""
    return np.einsum("jab,ba->j", setup.gammas, rho).real


def born_distribution(rho: DensityOperator | np.ndarray, setup: Bb84Setup) -> FrequencyVector:
    mat = rho.mat if isinstance(rho, DensityOperator) else np.asarray(rho)
    probs = np.clip(born_probs(mat, setup), 0.0, None)
    return FrequencyVector(probs / probs.sum())


def sample_counts(fbar: FrequencyVector, m: int, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be at least 1")
    probs = np.asarray(fbar.probs, dtype=float)
    return rng.multinomial(m, probs / probs.sum())


def sample_frequencies(fbar: FrequencyVector, m: int, seed: int | Sequence[int]) -> FrequencyVector:
    """Multinomial draw of m test rounds from ``fbar``, returned as frequencies."""
    counts = sample_counts(fbar, m, generator(seed))
    return FrequencyVector(counts / m)


def ec_conditional_entropy(freq: FrequencyVector, setup: Bb84Setup | None = None) -> float:
    """H(Z|Y,C) in bits per signal for the key map that keeps only ZZ rounds.

    Z is Alice's bit on rounds where both parties chose Z and 0 otherwise,
    so only the ZZ block contributes. ``setup`` is accepted for symmetry with
    the other statistics functions; the index layout is fixed.
    """
    probs = np.asarray(freq.probs, dtype=float)
    zz = np.array(
        [[probs[outcome_index(0, a, 0, b)] for b in range(2)] for a in range(2)]
    )
    # -sum w log w over unnormalized weights: the difference equals
    # sum_b P(ZZ, b) H(A | ZZ, b), i.e. already weighted by P(ZZ)
    value = shannon_entropy(zz.ravel()) - shannon_entropy(zz.sum(axis=0))
    return max(0.0, float(value))


def qber_z(freq: FrequencyVector) -> float:
    probs = np.asarray(freq.probs)
    err = probs[outcome_index(0, 0, 0, 1)] + probs[outcome_index(0, 1, 0, 0)]
    tot = sum(probs[outcome_index(0, a, 0, b)] for a in range(2) for b in range(2))
    return float(err / tot) if tot > 0 else 0.0
