"""Toeplitz hashing over GF(2) and variable-input-length constructions.

Bitstrings are 1-D uint8 arrays of 0/1 values. Batch helpers take a stack of
family seeds (one row per draw) so that collision experiments with ~1e6
draws stay vectorized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .rng import task_generator

DISCARD = 2  # ternary symbol for a sifted-out round


def as_bits(z: Iterable[int] | np.ndarray) -> np.ndarray:
    bits = np.asarray(list(z) if not isinstance(z, np.ndarray) else z, dtype=np.uint8)
    if bits.ndim != 1 or np.any(bits > 1):
        raise ValueError("expected a 1-D bitstring of zeros and ones")
    return bits


@dataclass(frozen=True)
class ToeplitzFamily:
    """One member of the Toeplitz family, fixed by its diagonal seed.

    Entry (r, c) of the out_len x in_len matrix is seed[r - c + in_len - 1].
    """

    in_len: int
    out_len: int
    diagonal_seed: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.in_len < 1 or self.out_len < 1:
            raise ValueError("lengths must be positive")
        if self.out_len > self.in_len:
            raise ValueError("output length cannot exceed input length")
        seed = as_bits(self.diagonal_seed)
        if len(seed) != self.in_len + self.out_len - 1:
            raise ValueError("diagonal seed must have in_len + out_len - 1 bits")
        object.__setattr__(self, "diagonal_seed", seed)

    @classmethod
    def draw(cls, in_len: int, out_len: int, rng: np.random.Generator) -> "ToeplitzFamily":
        return cls(in_len, out_len, rng.integers(0, 2, in_len + out_len - 1, dtype=np.uint8))

    def matrix(self) -> np.ndarray:
        r = np.arange(self.out_len)[:, None]
        c = np.arange(self.in_len)[None, :]
        return self.diagonal_seed[r - c + self.in_len - 1]


def toeplitz_hash(fam: ToeplitzFamily, z: Sequence[int] | np.ndarray) -> np.ndarray:
    z = as_bits(z)
    if len(z) != fam.in_len:
        raise ValueError(f"input has {len(z)} bits, family expects {fam.in_len}")
    return (fam.matrix().astype(np.int64) @ z % 2).astype(np.uint8)


def toeplitz_hash_batch(seeds: np.ndarray, z: np.ndarray, out_len: int) -> np.ndarray:
    """Hash ``z`` under every family whose diagonal seed is a row of ``seeds``."""
    z = as_bits(z)
    in_len = len(z)
    if seeds.shape[1] != in_len + out_len - 1:
        raise ValueError("seed width does not match the lengths")
    support = np.flatnonzero(z)
    if support.size == 0:
        return np.zeros((seeds.shape[0], out_len), dtype=np.uint8)
    idx = np.arange(out_len)[:, None] - support[None, :] + in_len - 1
    return (seeds[:, idx].sum(axis=2, dtype=np.int64) % 2).astype(np.uint8)


@dataclass(frozen=True)
class VirtualHasher:
    """Independent (f_i, u_i) per input length i, drawn lazily from a seed.

    The draw for length i depends only on (seed, i), so the table behaves as
    if all n + 1 pairs were sampled up front.
    """

    seed: int
    out_len: int
    max_len: int = 4096

    def pair(self, length: int) -> tuple[ToeplitzFamily, np.ndarray]:
        if not 0 <= length <= self.max_len:
            raise ValueError(f"length {length} outside [0, {self.max_len}]")
        rng = task_generator(self.seed, length)
        mask = rng.integers(0, 2, self.out_len, dtype=np.uint8)
        return ToeplitzFamily.draw(max(length, self.out_len), self.out_len, rng), mask


def pad_to_output(z: np.ndarray, out_len: int) -> np.ndarray:
    """Zero-pad inputs shorter than the output length.

    Padding is injective within one input length, so a Toeplitz family on the
    padded string stays two-universal for inputs of that length.
    """
    if len(z) >= out_len:
        return z
    return np.concatenate([z, np.zeros(out_len - len(z), dtype=np.uint8)])


def naive_variable_hash(hashers: dict[int, ToeplitzFamily], z: Sequence[int] | np.ndarray) -> np.ndarray:
    """Hash with the family chosen by the input length alone."""
    z = as_bits(z)
    fam = hashers[len(z)]
    return toeplitz_hash(fam, pad_to_output(z, fam.out_len))


def virtual_variable_hash(vh: VirtualHasher, z: Sequence[int] | np.ndarray) -> np.ndarray:
    """f_len(z)(z) xor u_len(z)."""
    z = as_bits(z)
    fam, mask = vh.pair(len(z))
    return toeplitz_hash(fam, pad_to_output(z, vh.out_len)) ^ mask


@dataclass(frozen=True)
class SiftedViews:
    case1: np.ndarray  # ternary, DISCARD marks sifted-out rounds
    case2: np.ndarray  # discards mapped to 0
    kept: np.ndarray  # case 3 payload
    discarded_positions: tuple[int, ...]  # public announcement record

    def reconstruct_case1(self) -> np.ndarray:
        out = np.full(len(self.case1), DISCARD, dtype=np.uint8)
        keep = np.ones(len(self.case1), dtype=bool)
        keep[list(self.discarded_positions)] = False
        out[keep] = self.kept
        return out


def map_and_reconcile_cases(raw: Sequence[int | None]) -> SiftedViews:
    """Three representations of a sifted raw key: ternary, zero-filled, compacted."""
    symbols = np.array([DISCARD if s is None else int(s) for s in raw], dtype=np.uint8)
    if np.any(symbols > DISCARD):
        raise ValueError("symbols must be 0, 1 or a discard marker")
    discarded = symbols == DISCARD
    case2 = np.where(discarded, 0, symbols).astype(np.uint8)
    kept = symbols[~discarded].copy()
    return SiftedViews(symbols, case2, kept, tuple(int(i) for i in np.flatnonzero(discarded)))


# --------------------------------------------------------------------------
# statistical experiments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CollisionReport:
    pair: tuple[str, str]
    draws: int
    collisions: int
    bound: float
    verdict: str

    @property
    def rate(self) -> float:
        return self.collisions / self.draws

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "draws": self.draws,
            "collisions": self.collisions,
            "rate": self.rate,
            "bound": self.bound,
            "verdict": self.verdict,
        }


def _describe(z: np.ndarray) -> str:
    if not z.any():
        return f"0^{len(z)}"
    return "".join(str(b) for b in z)


def _chunks(total: int, size: int) -> Iterable[tuple[int, int]]:
    for k, start in enumerate(range(0, total, size)):
        yield k, min(size, total - start)


def _five_sigma(p: float, draws: int) -> float:
    return float(p + 5.0 * np.sqrt(p * (1 - p) / draws))


def same_length_collisions(
    z1: np.ndarray, z2: np.ndarray, out_len: int, draws: int, seed: int, chunk: int = 100_000
) -> CollisionReport:
    """Collision count of a fixed pair over independent Toeplitz draws."""
    z1, z2 = as_bits(z1), as_bits(z2)
    if len(z1) != len(z2):
        raise ValueError("pair must have equal length")
    width = len(z1) + out_len - 1
    hits = 0
    for k, size in _chunks(draws, chunk):
        seeds = task_generator(seed, 0, k).integers(0, 2, (size, width), dtype=np.uint8)
        h1 = toeplitz_hash_batch(seeds, z1, out_len)
        h2 = toeplitz_hash_batch(seeds, z2, out_len)
        hits += int(np.count_nonzero(np.all(h1 == h2, axis=1)))
    bound = _five_sigma(2.0**-out_len, draws)
    verdict = "PASS" if hits / draws <= bound else "VIOLATION"
    return CollisionReport((_describe(z1), _describe(z2)), draws, hits, bound, verdict)


def _variable_batch(
    z: np.ndarray, out_len: int, size: int, rng: np.random.Generator, masked: bool
) -> np.ndarray:
    z = pad_to_output(z, out_len)
    seeds = rng.integers(0, 2, (size, len(z) + out_len - 1), dtype=np.uint8)
    core = toeplitz_hash_batch(seeds, z, out_len)
    if masked:
        core ^= rng.integers(0, 2, (size, out_len), dtype=np.uint8)
    return core


def variable_length_collisions(
    z1: np.ndarray, z2: np.ndarray, out_len: int, draws: int, seed: int,
    virtual: bool, chunk: int = 100_000,
) -> CollisionReport:
    """Collisions of inputs of different lengths under per-length hashing.

    Each length gets its own independent draw, as in a per-length table. With
    ``virtual`` the uniform masks u_i are applied on top.
    """
    z1, z2 = as_bits(z1), as_bits(z2)
    if len(z1) == len(z2):
        raise ValueError("pair must have different lengths")
    hits = 0
    for k, size in _chunks(draws, chunk):
        h1 = _variable_batch(z1, out_len, size, task_generator(seed, len(z1), k), virtual)
        h2 = _variable_batch(z2, out_len, size, task_generator(seed, len(z2), k), virtual)
        hits += int(np.count_nonzero(np.all(h1 == h2, axis=1)))
    p = 2.0**-out_len
    if virtual:
        bound = _five_sigma(p, draws)
        verdict = "PASS" if abs(hits / draws - p) <= bound - p else "VIOLATION"
    else:
        bound = p
        verdict = "PASS" if hits / draws <= _five_sigma(p, draws) else "VIOLATION"
    return CollisionReport((_describe(z1), _describe(z2)), draws, hits, bound, verdict)


@dataclass(frozen=True)
class UniformityReport:
    input_len: int
    out_len: int
    draws: int
    chi2: float
    p_value: float

    @property
    def verdict(self) -> str:
        return "PASS" if self.p_value >= 0.01 else "VIOLATION"

    def to_dict(self) -> dict:
        return {
            "input_len": self.input_len,
            "out_len": self.out_len,
            "draws": self.draws,
            "chi2": self.chi2,
            "p_value": self.p_value,
            "verdict": self.verdict,
        }


def virtual_output_uniformity(
    z: np.ndarray, out_len: int, draws: int, seed: int, chunk: int = 100_000
) -> UniformityReport:
    """Chi-square test that f(z) xor u is uniform over the family draw."""
    z = as_bits(z)
    counts = np.zeros(2**out_len, dtype=np.int64)
    weights = 1 << np.arange(out_len - 1, -1, -1)
    for k, size in _chunks(draws, chunk):
        out = _variable_batch(z, out_len, size, task_generator(seed, len(z), k), True)
        counts += np.bincount(out @ weights, minlength=2**out_len)
    chi2, p_value = stats.chisquare(counts)
    return UniformityReport(len(z), out_len, draws, float(chi2), float(p_value))
