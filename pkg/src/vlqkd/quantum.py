"""Dense finite-dimensional operator algebra and entropy functionals.

Operators are plain complex numpy arrays. ``DensityOperator`` adds the
subsystem layout needed for partial traces. Subsystems are ordered
lexicographically: the first factor is the most significant index.
All entropies are in bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
# eigenvalues in [-PSD_TOL, ZERO_CLAMP] count as exact zeros
ZERO_CLAMP = 1e-14
SUPPORT_TOL = 1e-8


class SupportViolation(ValueError):
    """Raised when D(x||y) is infinite because x leaks outside supp(y)."""


class OperatorError(ValueError):
    """Raised when an operator fails a structural invariant."""


def hermitian(mat: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate that ``mat`` is square and Hermitian; return it as complex."""
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise OperatorError(f"expected a square matrix, got shape {mat.shape}")
    if np.max(np.abs(mat - mat.conj().T), initial=0.0) > tol:
        raise OperatorError("matrix is not Hermitian")
    return mat


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


@dataclass(frozen=True)
class DensityOperator:
    """A normalized PSD operator on a tensor product of ``dims``."""

    mat: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        mat = hermitian(self.mat)
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise OperatorError(f"invalid subsystem dims {dims}")
        if int(np.prod(dims)) != mat.shape[0]:
            raise OperatorError(f"dims {dims} do not match matrix size {mat.shape[0]}")
        evals = np.linalg.eigvalsh(mat)
        if evals[0] < -PSD_TOL:
            raise OperatorError(f"smallest eigenvalue {evals[0]:.3e} is negative")
        if abs(np.trace(mat).real - 1.0) > TRACE_TOL:
            raise OperatorError(f"trace {np.trace(mat).real!r} differs from 1")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @classmethod
    def from_pure(cls, vec: Sequence[complex], dims: Sequence[int]) -> "DensityOperator":
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(np.outer(vec, vec.conj()), tuple(dims))

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityOperator":
        d = int(np.prod(dims))
        return cls(np.eye(d, dtype=complex) / d, tuple(dims))


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the operands, first factor most significant."""
    return reduce(np.kron, (np.asarray(op, dtype=complex) for op in ops))


def partial_trace_matrix(mat: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep`` (indices into ``dims``)."""
    dims = tuple(int(d) for d in dims)
    keep = sorted(set(keep))
    n = len(dims)
    if not keep or any(k < 0 or k >= n for k in keep):
        raise OperatorError(f"invalid subsystem selection {keep} for {n} subsystems")
    tensor_form = np.asarray(mat).reshape(dims + dims)
    # einsum labels: row indices then column indices, traced ones share a label
    row = list(range(n))
    col = [k + n if k in keep else k for k in range(n)]
    out = [k for k in keep] + [k + n for k in keep]
    reduced = np.einsum(tensor_form, row + col, out)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return reduced.reshape(d_keep, d_keep)


def partial_trace(rho: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    keep = sorted(set(keep))
    reduced = partial_trace_matrix(rho.mat, rho.dims, keep)
    return DensityOperator(symmetrize(reduced), tuple(rho.dims[k] for k in keep))


def clamped_eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a PSD matrix with tiny eigenvalues set to zero."""
    evals, evecs = np.linalg.eigh(symmetrize(np.asarray(mat, dtype=complex)))
    if evals[0] < -PSD_TOL:
        raise OperatorError(f"operator has eigenvalue {evals[0]:.3e} < 0")
    evals = np.where(evals <= ZERO_CLAMP, 0.0, evals)
    return evals, evecs


def _xlog2x(vals: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vals)
    pos = vals > 0
    out[pos] = vals[pos] * np.log2(vals[pos])
    return out


def shannon_entropy(probs: Sequence[float]) -> float:
    """Shannon entropy in bits with 0 log 0 = 0."""
    return float(-_xlog2x(np.asarray(probs, dtype=float)).sum())


def binary_entropy(p: float) -> float:
    return shannon_entropy([p, 1.0 - p])


def von_neumann_entropy(rho: DensityOperator | np.ndarray) -> float:
    mat = rho.mat if isinstance(rho, DensityOperator) else rho
    evals, _ = clamped_eigh(mat)
    return shannon_entropy(evals)


def relative_entropy(x: np.ndarray, y: np.ndarray) -> float:
    """Quantum relative entropy D(x||y) = Tr x log x - Tr x log y in bits."""
    x = hermitian(np.asarray(x, dtype=complex), tol=1e-10)
    y = hermitian(np.asarray(y, dtype=complex), tol=1e-10)
    x_vals, x_vecs = clamped_eigh(x)
    y_vals, y_vecs = clamped_eigh(y)
    # weight of x on ker(y)
    kernel = y_vecs[:, y_vals == 0]
    if kernel.shape[1]:
        leak = np.trace(kernel.conj().T @ x @ kernel).real
        if leak > SUPPORT_TOL:
            raise SupportViolation(f"x has weight {leak:.3e} outside the support of y")
    support = y_vals > 0
    log_y = (y_vecs[:, support] * np.log2(y_vals[support])) @ y_vecs[:, support].conj().T
    value = _xlog2x(x_vals).sum() - np.trace(x @ log_y).real
    return float(value)
