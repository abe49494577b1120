"""Certified minimization of H(Z|CE) over statistics-constrained two-qubit states.

The objective is f(rho) = D(G(rho) || Z(G(rho))) for a Kraus map G and a
pinching Z. The feasible set is

    S = {sigma >= 0, Tr_B sigma = sigma_A, ||Phi(sigma) - center||_1 <= radius},

where Phi collects the sixteen Born probabilities Tr(Gamma_j sigma).

Every lower bound reported here comes from the convexity inequality

    min_S f >= f(rho) - Tr(grad rho) + min_S Tr(grad sigma),

with the inner minimum bounded below by the weak-duality expression

    lambda_min(grad + Y (x) I + sum_j v_j Gamma_j) - Tr(Y sigma_A) - v.center - radius |v|_inf,

which holds for *any* Hermitian Y and real v. Solver inaccuracy can only make
the bound looser, never invalid.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.linalg import orth
from scipy.optimize import minimize_scalar

from .bb84 import Bb84Setup, FrequencyVector
from .quantum import DensityOperator, partial_trace_matrix, symmetrize

LN2 = math.log(2.0)
PERTURBATION = 1e-12
DEFAULT_TOL = 1e-5
MAX_FW_ITERATIONS = 500
INFEASIBLE_MARGIN = 1e-9
# radius added when the feasible set has (numerically) no interior
DEGENERATE_RADIUS_PAD = 1e-6

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class Status(str, Enum):
    CONVERGED = "Converged"
    ITERATION_CAP = "IterationCap"
    INFEASIBLE = "Infeasible"


class InfeasibleError(RuntimeError):
    """The affine + ball constraints admit no positive semidefinite solution."""


class NumericalError(RuntimeError):
    """The interior-point iteration failed to make progress."""


# --------------------------------------------------------------------------
# Kraus channel and objective
# --------------------------------------------------------------------------


def _range_basis(mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    return orth(mat, rcond=tol) if mat.size else mat


@dataclass(frozen=True)
class KrausChannel:
    """G(rho) = sum_i K_i rho K_i^dag followed by the pinching {Z_j}."""

    kraus_ops: tuple[np.ndarray, ...]
    pinching_ops: tuple[np.ndarray, ...]
    # reduced maps on supp G and supp Z(G), filled in __post_init__
    _g_map: np.ndarray = field(init=False, repr=False, compare=False)
    _gt_map: np.ndarray = field(init=False, repr=False, compare=False)
    _zt_map: np.ndarray = field(init=False, repr=False, compare=False)
    _dims: tuple[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        kraus = tuple(np.asarray(k, dtype=complex) for k in self.kraus_ops)
        pinch = tuple(np.asarray(z, dtype=complex) for z in self.pinching_ops)
        d_in = kraus[0].shape[1]
        d_out = kraus[0].shape[0]
        total = sum(k.conj().T @ k for k in kraus)
        if np.linalg.eigvalsh(total)[-1] > 1 + 1e-10:
            raise ValueError("Kraus operators are not trace non-increasing")
        for i, z in enumerate(pinch):
            if np.max(np.abs(z @ z - z)) > 1e-10 or np.max(np.abs(z - z.conj().T)) > 1e-10:
                raise ValueError(f"pinching operator {i} is not an orthogonal projector")
        if np.max(np.abs(sum(pinch) - np.eye(d_out))) > 1e-10:
            raise ValueError("pinching projectors do not sum to the identity")

        # facial reduction: range(G(rho)) = sum_i range(K_i) for every rho > 0,
        # and range(Z(G(rho))) is the direct sum of the Z_j images of it
        v_s = _range_basis(np.hstack(kraus))
        v_t = np.hstack([_range_basis(z @ v_s) for z in pinch])

        def vec_map(left: Sequence[np.ndarray]) -> np.ndarray:
            # row-major vec(L X L^dag) = (L kron conj(L)) vec(X)
            return sum(np.kron(a, a.conj()) for a in left)

        g_map = vec_map([v_s.conj().T @ k for k in kraus])
        gt_map = vec_map([v_t.conj().T @ k for k in kraus])
        zt_map = vec_map([v_t.conj().T @ z @ k for k in kraus for z in pinch])
        object.__setattr__(self, "kraus_ops", kraus)
        object.__setattr__(self, "pinching_ops", pinch)
        object.__setattr__(self, "_g_map", g_map)
        object.__setattr__(self, "_gt_map", gt_map)
        object.__setattr__(self, "_zt_map", zt_map)
        object.__setattr__(self, "_dims", (v_s.shape[1], v_t.shape[1]))
        if d_in * d_in != g_map.shape[1]:
            raise ValueError("inconsistent Kraus input dimension")

    @property
    def input_dim(self) -> int:
        return self.kraus_ops[0].shape[1]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)

    def pinch(self, mat: np.ndarray) -> np.ndarray:
        return sum(z @ mat @ z for z in self.pinching_ops)

    def reduced(self, mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """G(X) on supp G and Z(G(X)) on supp Z(G), for a stack of inputs."""
        d = self.input_dim
        ds, dt = self._dims
        flat = mats.reshape(-1, d * d).T
        gs = (self._g_map @ flat).T.reshape(-1, ds, ds)
        zt = (self._zt_map @ flat).T.reshape(-1, dt, dt)
        return gs, zt


def bb84_key_channel(setup: Bb84Setup) -> KrausChannel:
    """Key map that keeps Alice's Z-basis bit on rounds where both chose Z.

    Output space is key register (x) A (x) B (x) announcement register, with
    the announcement register fixed to |0> so the map embeds into 16 dims.
    Rounds outside ZZ carry the constant key value 0 and contribute nothing.
    """
    eye2 = np.eye(2, dtype=complex)
    ket = [np.array([[1], [0]], dtype=complex), np.array([[0], [1]], dtype=complex)]
    proj = [k @ k.conj().T for k in ket]
    sqrt_pz = math.sqrt(setup.p_z)
    k_op = sum(
        np.kron(np.kron(np.kron(ket[z], sqrt_pz * proj[z]), sqrt_pz * eye2), ket[0])
        for z in range(2)
    )
    z_ops = [np.kron(proj[z], np.eye(8, dtype=complex)) for z in range(2)]
    return KrausChannel((k_op,), tuple(z_ops))


def _perturb(rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (1.0 - PERTURBATION) * rho + PERTURBATION * np.eye(d) / d


def _as_matrix(rho: DensityOperator | np.ndarray) -> np.ndarray:
    return rho.mat if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)


def _log_divided_differences(evals: np.ndarray) -> np.ndarray:
    """First divided differences of log on the spectrum (Frechet kernel)."""
    la = evals[:, None]
    lb = evals[None, :]
    diff = la - lb
    close = np.abs(diff) <= 1e-12 * np.maximum(np.abs(la), np.abs(lb))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.log(la) - np.log(lb)) / diff
    return np.where(close, 2.0 / (la + lb), out)


def _psd_log(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(symmetrize(mat))
    if evals[0] <= 0:
        raise NumericalError("reduced operator lost positive definiteness")
    return (evecs * np.log(evals)) @ evecs.conj().T, evals, evecs


def _objective_parts(rho: np.ndarray, ch: KrausChannel):
    gs, zt = ch.reduced(rho[None])
    gs, zt = gs[0], zt[0]
    log_gs, gs_vals, gs_vecs = _psd_log(gs)
    log_zt, zt_vals, zt_vecs = _psd_log(zt)
    # Tr(G log G) - Tr(G log Z(G)); on block-diagonal log Z(G) the second
    # trace equals Tr(Z(G) log Z(G))
    value = float(np.sum(gs_vals * np.log(gs_vals)) - np.sum(zt_vals * np.log(zt_vals)))
    return value, (log_gs, gs_vals, gs_vecs), (log_zt, zt_vals, zt_vecs)


def objective(rho: DensityOperator | np.ndarray, ch: KrausChannel) -> float:
    """f(rho) in bits, evaluated at the slightly mixed point used throughout."""
    value, _, _ = _objective_parts(_perturb(_as_matrix(rho)), ch)
    return value / LN2


def _gradient_from_parts(parts_s, parts_t, ch: KrausChannel) -> np.ndarray:
    d = ch.input_dim
    log_gs = parts_s[0]
    log_zt = parts_t[0]
    grad = ch._g_map.conj().T @ log_gs.reshape(-1) - ch._gt_map.conj().T @ log_zt.reshape(-1)
    return symmetrize(grad.reshape(d, d)) / LN2


def gradient(rho: DensityOperator | np.ndarray, ch: KrausChannel) -> np.ndarray:
    """Hermitian matrix grad with f(rho + D) ~ f(rho) + Tr(grad D), in bits."""
    _, parts_s, parts_t = _objective_parts(_perturb(_as_matrix(rho)), ch)
    return _gradient_from_parts(parts_s, parts_t, ch)


def _objective_value_gradient(rho: np.ndarray, ch: KrausChannel) -> tuple[float, np.ndarray]:
    value, parts_s, parts_t = _objective_parts(rho, ch)
    return value / LN2, _gradient_from_parts(parts_s, parts_t, ch)


def _objective_hessian(rho: np.ndarray, ch: KrausChannel, basis: np.ndarray):
    """Value, gradient coefficients and Hessian of f(rho + sum y_k basis_k) at y = 0."""
    value, parts_s, parts_t = _objective_parts(rho, ch)
    grad = _gradient_from_parts(parts_s, parts_t, ch)
    gs_b, zt_b = ch.reduced(basis)
    hess = np.zeros((basis.shape[0], basis.shape[0]))
    for (_, vals, vecs), stack, sign in ((parts_s, gs_b, 1.0), (parts_t, zt_b, -1.0)):
        kernel = _log_divided_differences(vals)
        rotated = np.einsum("ai,kab,bj->kij", vecs.conj(), stack, vecs).reshape(len(basis), -1)
        hess += sign * np.real((rotated.conj() * kernel.reshape(-1)) @ rotated.T)
    g_coef = np.einsum("ab,kba->k", grad, basis).real
    return value / LN2, g_coef, 0.5 * (hess + hess.T) / LN2


# --------------------------------------------------------------------------
# Feasible set
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibleSpec:
    center: FrequencyVector
    radius: float
    sigma_bar_A: DensityOperator
    gammas: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.radius >= 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")
        if self.sigma_bar_A.dim != 2:
            raise ValueError("only qubit marginals are supported")

    @classmethod
    def for_setup(cls, setup: Bb84Setup, center: FrequencyVector, radius: float) -> "FeasibleSpec":
        return cls(center, float(radius), setup.sigma_bar_A, setup.gammas)

    def with_radius(self, radius: float) -> "FeasibleSpec":
        return FeasibleSpec(self.center, float(radius), self.sigma_bar_A, self.gammas)

    def statistics(self, sigma: np.ndarray) -> np.ndarray:
        return np.einsum("jab,ba->j", self.gammas, sigma).real

    def violation(self, sigma: np.ndarray) -> dict[str, float]:
        """How far ``sigma`` is from satisfying each constraint (0 when inside)."""
        marg = partial_trace_matrix(sigma, (2, 2), [0])
        dist = float(np.abs(self.statistics(sigma) - self.center.probs).sum())
        return {
            "psd": max(0.0, -float(np.linalg.eigvalsh(symmetrize(sigma))[0])),
            "marginal": float(np.max(np.abs(marg - self.sigma_bar_A.mat))),
            "ball": max(0.0, dist - self.radius),
        }


def _marginal_free_basis() -> np.ndarray:
    """Orthonormal Hermitian basis of {X : Tr_B X = 0} on two qubits."""
    return np.array([np.kron(pa, pb) / 2 for pa in PAULIS for pb in PAULIS[1:]])


BASIS = _marginal_free_basis()
BASIS.setflags(write=False)


def dual_lower_bound(
    grad: np.ndarray, y_mat: np.ndarray, v: np.ndarray, spec: FeasibleSpec
) -> float:
    """Weak-duality lower bound on min over S of Tr(grad sigma), valid for any (Y, v)."""
    y_mat = symmetrize(np.asarray(y_mat, dtype=complex))
    v = np.asarray(v, dtype=float)
    mat = symmetrize(grad + np.kron(y_mat, np.eye(2)) + np.einsum("j,jab->ab", v, spec.gammas))
    lam = np.linalg.eigvalsh(mat)[0]
    # guard against eigenvalue round-off
    lam -= 64 * np.finfo(float).eps * max(1.0, np.linalg.norm(mat, 2))
    return float(
        lam
        - np.trace(y_mat @ spec.sigma_bar_A.mat).real
        - v @ spec.center.probs
        - spec.radius * np.max(np.abs(v))
    )


# --------------------------------------------------------------------------
# Log-barrier interior-point machinery
# --------------------------------------------------------------------------


class _Barrier:
    """Barrier for S in coordinates (y, s[, w]).

    sigma(y) = sigma_A (x) I/2 + sum_k y_k B_k keeps the marginal exact. The
    slacks s bound |Phi(sigma) - c| entrywise. In phase 1 the extra variable w
    relaxes both the eigenvalue bound (sigma + w I > 0) and the ball budget.
    """

    def __init__(self, spec: FeasibleSpec, phase_one: bool = False):
        self.spec = spec
        self.phase_one = phase_one
        self.sigma0 = np.kron(spec.sigma_bar_A.mat, np.eye(2) / 2)
        self.a_mat = np.einsum("jab,kba->jk", spec.gammas, BASIS).real
        self.offset = spec.statistics(self.sigma0) - spec.center.probs
        n_y, n_s = BASIS.shape[0], len(self.offset)
        self.n_y, self.n_s = n_y, n_s
        n_x = n_y + n_s + (1 if phase_one else 0)
        eye = np.eye(n_s)
        rows = [np.hstack([-self.a_mat, eye]), np.hstack([self.a_mat, eye])]
        consts = [-self.offset, self.offset]
        budget = np.hstack([np.zeros(n_y), -np.ones(n_s)])
        rows.append(budget[None])
        consts.append(np.array([spec.radius]))
        c_mat = np.vstack(rows)
        if phase_one:
            extra = np.zeros((c_mat.shape[0], 1))
            extra[-1, 0] = 1.0  # r + w - sum s
            c_mat = np.hstack([c_mat, extra])
        self.c_mat = c_mat
        self.c_off = np.concatenate(consts)
        self.n_x = n_x
        self.nu = 4 + c_mat.shape[0]

    def sigma(self, x: np.ndarray) -> np.ndarray:
        return self.sigma0 + np.tensordot(x[: self.n_y], BASIS, axes=1)

    def _shifted(self, x: np.ndarray) -> np.ndarray:
        sig = self.sigma(x)
        if self.phase_one:
            sig = sig + x[-1] * np.eye(4)
        return sig

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.c_mat @ x + self.c_off

    def inside(self, x: np.ndarray) -> bool:
        if np.any(self.slacks(x) <= 0):
            return False
        try:
            np.linalg.cholesky(symmetrize(self._shifted(x)))
        except np.linalg.LinAlgError:
            return False
        return True

    def value(self, x: np.ndarray) -> float:
        h = self.slacks(x)
        evals = np.linalg.eigvalsh(symmetrize(self._shifted(x)))
        if np.any(h <= 0) or evals[0] <= 0:
            return math.inf
        return float(-np.sum(np.log(h)) - np.sum(np.log(evals)))

    def derivatives(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        h = self.slacks(x)
        evals, evecs = np.linalg.eigh(symmetrize(self._shifted(x)))
        value = float(-np.sum(np.log(h)) - np.sum(np.log(evals)))
        inv_h = 1.0 / h
        grad = -self.c_mat.T @ inv_h
        hess = (self.c_mat.T * inv_h**2) @ self.c_mat
        rotated = np.einsum("ai,kab,bj->kij", evecs.conj(), BASIS, evecs)
        inv_d = 1.0 / evals
        ny = self.n_y
        grad[:ny] -= np.einsum("kii,i->k", rotated, inv_d).real
        kernel = np.outer(inv_d, inv_d).reshape(-1)
        flat = rotated.reshape(ny, -1)
        hess[:ny, :ny] += np.real((flat.conj() * kernel) @ flat.T)
        if self.phase_one:
            grad[-1] -= inv_d.sum()
            cross = np.einsum("kii,i->k", rotated, inv_d**2).real
            hess[:ny, -1] += cross
            hess[-1, :ny] += cross
            hess[-1, -1] += np.sum(inv_d**2)
        return value, grad, 0.5 * (hess + hess.T)

    def multipliers(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Dual estimates (v, Z) implied by the central-path condition at parameter t."""
        h = self.slacks(x)
        n_s = self.n_s
        v = (1.0 / h[:n_s] - 1.0 / h[n_s : 2 * n_s]) / t
        z_mat = np.linalg.inv(symmetrize(self.sigma(x))) / t
        return v, symmetrize(z_mat)


def _newton_center(
    x: np.ndarray,
    t: float,
    barrier: _Barrier,
    smooth: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    smooth_value: Callable[[np.ndarray], float],
    max_steps: int = 100,
    tol: float = 1e-14,
) -> tuple[np.ndarray, int]:
    """Minimize t*smooth + barrier from a strictly interior x by damped Newton.

    Close to the center (decrement below 1/4) full steps are taken without
    comparing function values, which at large t are dominated by round-off.
    """
    steps = 0
    previous = math.inf
    for steps in range(1, max_steps + 1):
        f_val, f_grad, f_hess = smooth(x)
        b_val, b_grad, b_hess = barrier.derivatives(x)
        grad = t * f_grad + b_grad
        hess = t * f_hess + b_hess
        # symmetric diagonal scaling tames the 1/slack^2 spread of the barrier
        scale = 1.0 / np.sqrt(np.abs(np.diag(hess)))
        scaled = hess * np.outer(scale, scale)
        try:
            step = -scale * scipy.linalg.cho_solve(scipy.linalg.cho_factor(scaled), scale * grad)
        except np.linalg.LinAlgError:
            step = -scale * np.linalg.lstsq(scaled, scale * grad, rcond=None)[0]
        decrement = float(-grad @ step)
        if decrement / 2 <= tol:
            break
        if decrement < 0.25:
            if decrement >= 0.5 * previous:
                break  # no longer converging quadratically: round-off floor
            previous = decrement
            trial = x + step
            if barrier.inside(trial):
                x = trial
                continue
        current = t * f_val + b_val
        alpha = 1.0
        while alpha > 1e-14:
            trial = x + alpha * step
            if barrier.inside(trial):
                new = t * smooth_value(trial) + barrier.value(trial)
                if new <= current - 0.25 * alpha * decrement:
                    break
            alpha *= 0.5
        else:
            break
        x = trial
    return x, steps


@dataclass(frozen=True)
class _Interior:
    x: np.ndarray
    barrier: _Barrier
    spec: FeasibleSpec
    steps: int


def _phase_one(spec: FeasibleSpec) -> tuple[Optional[np.ndarray], float, float, int]:
    """Minimize w over the relaxed system. Returns (x, w_upper, w_lower, steps)."""
    barrier = _Barrier(spec, phase_one=True)
    x = np.zeros(barrier.n_x)
    h_center = np.abs(barrier.offset)
    x[barrier.n_y : barrier.n_y + barrier.n_s] = h_center + 1.0
    x[-1] = max(1.0, float(np.sum(h_center + 1.0)) - spec.radius + 1.0)
    obj = np.zeros(barrier.n_x)
    obj[-1] = 1.0
    zero_hess = np.zeros((barrier.n_x, barrier.n_x))

    def smooth(z):
        return float(z[-1]), obj, zero_hess

    def smooth_value(z):
        return float(z[-1])

    t, steps = 1.0, 0
    while True:
        x, k = _newton_center(x, t, barrier, smooth, smooth_value, tol=1e-9)
        steps += k
        w = float(x[-1])
        lower = w - barrier.nu / t
        if w < -1e-2 or lower > INFEASIBLE_MARGIN or barrier.nu / t < 1e-10:
            return x, w, lower, steps
        t *= 10.0


def _strict_interior(spec: FeasibleSpec) -> _Interior:
    """Strictly feasible start for the main barrier, padding the radius if needed.

    A padded radius only enlarges the feasible set, so bounds computed on it
    stay valid lower bounds for the original problem.
    """
    x1, w_up, w_low, steps = _phase_one(spec)
    if w_low > INFEASIBLE_MARGIN:
        raise InfeasibleError(
            f"no feasible state: relaxation needs at least {w_low:.3e}"
        )
    work = spec
    if w_up > -1e-7:
        work = spec.with_radius(spec.radius + DEGENERATE_RADIUS_PAD)
        x1, w_up, w_low, more = _phase_one(work)
        steps += more
        if w_up >= 0:
            raise InfeasibleError("feasible set has no interior even after padding")
    barrier = _Barrier(work)
    return _Interior(x1[: barrier.n_x].copy(), barrier, work, steps)


def _certificate(grad: np.ndarray, x: np.ndarray, t: float, barrier: _Barrier) -> tuple[float, np.ndarray, np.ndarray]:
    """Lower bound on min_S Tr(grad sigma) from barrier multipliers at x."""
    spec = barrier.spec
    v, z_mat = barrier.multipliers(x, t)
    m0 = grad + np.einsum("j,jab->ab", v, spec.gammas) - z_mat
    y_mat = -partial_trace_matrix(m0, (2, 2), [0]) / 2
    return dual_lower_bound(grad, y_mat, v, spec), y_mat, v


class _DualBarrier:
    """Barrier for the dual of min Tr(G sigma) over S.

    Variables (tau, eta, v, gamma) with Y = sum_a eta_a P_a:
    maximize tau - Tr(Y sigma_A) - v.c - radius*gamma subject to
    G + Y (x) I + sum_j v_j Gamma_j - tau I > 0 and |v_j| < gamma.
    """

    def __init__(self, grad: np.ndarray, spec: FeasibleSpec):
        if spec.radius <= 0:
            raise ValueError("dual barrier needs a positive radius")
        self.spec = spec
        self.grad = grad
        n_s = spec.gammas.shape[0]
        self.n_s = n_s
        lifted = [np.kron(p, np.eye(2)) for p in PAULIS]
        ops = [-np.eye(4, dtype=complex)] + lifted + list(spec.gammas)
        self.ops = np.array(ops)
        self.n_lmi = len(ops)
        self.n_x = self.n_lmi + 1
        self.objective = -np.concatenate([
            [1.0],
            [-np.trace(p @ spec.sigma_bar_A.mat).real for p in PAULIS],
            -spec.center.probs,
            [-spec.radius],
        ])
        rows = np.zeros((2 * n_s, self.n_x))
        v_cols = slice(1 + len(PAULIS), 1 + len(PAULIS) + n_s)
        rows[:n_s, v_cols] = -np.eye(n_s)
        rows[n_s:, v_cols] = np.eye(n_s)
        rows[:, -1] = 1.0
        self.c_mat = rows
        self.nu = 4 + 2 * n_s
        self.v_cols = v_cols

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return self.grad + np.tensordot(x[: self.n_lmi], self.ops, axes=1)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_mat = np.tensordot(x[1 : 1 + len(PAULIS)], np.array(PAULIS), axes=1)
        return y_mat, x[self.v_cols]

    def start(self) -> np.ndarray:
        x = np.zeros(self.n_x)
        x[0] = np.linalg.eigvalsh(self.grad)[0] - 1.0
        x[-1] = 1.0
        return x

    def inside(self, x: np.ndarray) -> bool:
        if np.any(self.c_mat @ x <= 0):
            return False
        try:
            np.linalg.cholesky(symmetrize(self.matrix(x)))
        except np.linalg.LinAlgError:
            return False
        return True

    def value(self, x: np.ndarray) -> float:
        h = self.c_mat @ x
        evals = np.linalg.eigvalsh(symmetrize(self.matrix(x)))
        if np.any(h <= 0) or evals[0] <= 0:
            return math.inf
        return float(-np.sum(np.log(h)) - np.sum(np.log(evals)))

    def derivatives(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        h = self.c_mat @ x
        evals, evecs = np.linalg.eigh(symmetrize(self.matrix(x)))
        value = float(-np.sum(np.log(h)) - np.sum(np.log(evals)))
        grad = -self.c_mat.T @ (1.0 / h)
        hess = (self.c_mat.T * h**-2.0) @ self.c_mat
        rotated = np.einsum("ai,kab,bj->kij", evecs.conj(), self.ops, evecs)
        inv_d = 1.0 / evals
        grad[: self.n_lmi] -= np.einsum("kii,i->k", rotated, inv_d).real
        flat = rotated.reshape(self.n_lmi, -1)
        hess[: self.n_lmi, : self.n_lmi] += np.real(
            (flat.conj() * np.outer(inv_d, inv_d).reshape(-1)) @ flat.T
        )
        return value, grad, 0.5 * (hess + hess.T)


def _dual_bound(grad: np.ndarray, spec: FeasibleSpec, upper: float, gap_tol: float) -> float:
    """Best weak-duality bound found along the dual central path."""
    dual = _DualBarrier(grad, spec)
    lin = dual.objective
    zero_hess = np.zeros((dual.n_x, dual.n_x))

    def smooth(z):
        return float(lin @ z), lin, zero_hess

    def smooth_value(z):
        return float(lin @ z)

    x = dual.start()
    t = 1.0 / max(1.0, float(np.linalg.norm(grad, 2)))
    best = -math.inf
    while t < 1e16:
        x, _ = _newton_center(x, t, dual, smooth, smooth_value)
        y_mat, v = dual.split(x)
        best = max(best, dual_lower_bound(grad, y_mat, v, spec))
        if upper - best <= gap_tol or dual.nu / t < 1e-3 * gap_tol:
            break
        t *= 20.0
    return best


# --------------------------------------------------------------------------
# Public solvers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSolution:
    sigma: DensityOperator
    value: float
    lower: float

    @property
    def gap(self) -> float:
        return self.value - self.lower


def _to_density(sigma: np.ndarray) -> DensityOperator:
    sigma = symmetrize(sigma)
    evals, evecs = np.linalg.eigh(sigma)
    if evals[0] < 0:
        sigma = (evecs * np.clip(evals, 0, None)) @ evecs.conj().T
    return DensityOperator(sigma / np.trace(sigma).real, (2, 2))


def _solve_linear(grad: np.ndarray, interior: _Interior, gap_tol: float) -> tuple[np.ndarray, float, float]:
    barrier = interior.barrier
    g_coef = np.einsum("ab,kba->k", grad, BASIS).real
    base = float(np.trace(grad @ barrier.sigma0).real)
    lin = np.concatenate([g_coef, np.zeros(barrier.n_x - barrier.n_y)])
    zero_hess = np.zeros((barrier.n_x, barrier.n_x))

    def smooth(z):
        return base + float(lin @ z), lin, zero_hess

    def smooth_value(z):
        return base + float(lin @ z)

    scale = max(1.0, float(np.linalg.norm(grad, 2)))
    x, t = interior.x, 1.0 / scale
    best_lower = -math.inf
    while True:
        x, _ = _newton_center(x, t, barrier, smooth, smooth_value)
        sigma = barrier.sigma(x)
        value = float(np.trace(grad @ sigma).real)
        lower, _, _ = _certificate(grad, x, t, barrier)
        best_lower = max(best_lower, lower)
        if value - best_lower <= gap_tol:
            return sigma, value, best_lower
        if barrier.nu / t < 0.1 * gap_tol:
            # multiplier estimates lose precision as sigma turns singular;
            # bound the dual directly instead
            lower = _dual_bound(grad, barrier.spec, value, gap_tol)
            return sigma, value, max(best_lower, lower)
        t *= 20.0


def linear_subproblem(grad: np.ndarray, spec: FeasibleSpec, gap_tol: float = 1e-9) -> LinearSolution:
    """Minimize Tr(grad sigma) over the feasible set with a certified lower bound."""
    grad = symmetrize(np.asarray(grad, dtype=complex))
    interior = _strict_interior(spec)
    sigma, value, lower = _solve_linear(grad, interior, gap_tol)
    return LinearSolution(_to_density(sigma), value, lower)


@dataclass(frozen=True)
class OptResult:
    rho_star: Optional[DensityOperator]
    upper_value: float
    certified_lower: float
    fw_gap: float
    iterations: int
    status: Status

    def to_dict(self) -> dict:
        return {
            "upper": self.upper_value,
            "lower": self.certified_lower,
            "gap": self.fw_gap,
            "iters": self.iterations,
            "status": self.status.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def certified_bound(rho: np.ndarray, spec: FeasibleSpec, ch: KrausChannel) -> tuple[float, float]:
    """(f(rho), certified lower bound on min_S f) from one linearization at rho."""
    point = _perturb(rho)
    value, grad = _objective_value_gradient(point, ch)
    lin = linear_subproblem(grad, spec)
    return value, value - float(np.trace(grad @ point).real) + lin.lower


def _minimize_barrier(spec: FeasibleSpec, ch: KrausChannel, tol: float) -> OptResult:
    interior = _strict_interior(spec)
    barrier = interior.barrier
    n_y = barrier.n_y

    def smooth(z):
        value, g_coef, hess = _objective_hessian(barrier.sigma(z), ch, BASIS)
        full_g = np.zeros(barrier.n_x)
        full_g[:n_y] = g_coef
        full_h = np.zeros((barrier.n_x, barrier.n_x))
        full_h[:n_y, :n_y] = hess
        return value, full_g, full_h

    def smooth_value(z):
        return _objective_parts(barrier.sigma(z), ch)[0] / LN2

    target = tol / 100
    x, t = interior.x, 1.0
    steps = interior.steps
    best_lower = -math.inf
    best_upper = math.inf
    best_sigma = None
    status = Status.ITERATION_CAP
    stalled = 0
    while t < 1e14 and stalled < 2:
        x, k = _newton_center(x, t, barrier, smooth, smooth_value)
        steps += k
        if barrier.nu / t < 1e-4:
            sigma = barrier.sigma(x)
            point = _perturb(sigma)
            value, grad = _objective_value_gradient(point, ch)
            lin_lower, _, _ = _certificate(grad, x, t, barrier)
            lower = value - float(np.trace(grad @ point).real) + lin_lower
            # past ~1e9 round-off in the multipliers dominates the barrier gap
            stalled = stalled + 1 if lower <= best_lower else 0
            best_lower = max(best_lower, lower)
            if value < best_upper:
                best_upper, best_sigma = value, sigma
            if best_upper - best_lower <= target:
                status = Status.CONVERGED
                break
        t *= 10.0
    if best_sigma is None:
        raise NumericalError("barrier iteration never reached the certification stage")
    if status is not Status.CONVERGED:
        point = _perturb(best_sigma)
        value, grad = _objective_value_gradient(point, ch)
        offset = value - float(np.trace(grad @ point).real)
        lin_lower = _dual_bound(grad, barrier.spec, value - offset, target)
        best_lower = max(best_lower, offset + lin_lower)
        if best_upper - best_lower <= target:
            status = Status.CONVERGED
    gap = best_upper - best_lower
    if status is not Status.CONVERGED and gap <= tol:
        status = Status.CONVERGED
    return OptResult(_to_density(best_sigma), best_upper, best_lower, gap, steps, status)


def _minimize_frank_wolfe(
    spec: FeasibleSpec, ch: KrausChannel, tol: float, max_iter: int
) -> OptResult:
    interior = _strict_interior(spec)
    rho = interior.barrier.sigma(interior.x)
    best_lower = -math.inf
    value = math.inf
    status = Status.ITERATION_CAP
    iters = 0
    for iters in range(1, max_iter + 1):
        point = _perturb(rho)
        value, grad = _objective_value_gradient(point, ch)
        direction, _, lin_lower = _solve_linear(grad, interior, 1e-9)
        best_lower = max(best_lower, value - float(np.trace(grad @ point).real) + lin_lower)
        if value - best_lower <= tol:
            status = Status.CONVERGED
            break
        delta = direction - rho

        def along(gamma: float) -> float:
            return objective(rho + gamma * delta, ch)

        gamma = minimize_scalar(along, bounds=(0.0, 1.0), method="bounded",
                                options={"xatol": 1e-10}).x
        rho = symmetrize(rho + gamma * delta)
    return OptResult(_to_density(rho), value, best_lower, value - best_lower, iters, status)


def minimize_entropy(
    spec: FeasibleSpec,
    ch: KrausChannel,
    tol: float = DEFAULT_TOL,
    method: str = "barrier",
    max_iter: int = MAX_FW_ITERATIONS,
) -> OptResult:
    """Certified lower bound on min over the feasible set of f, in bits per signal.

    ``method="barrier"`` follows the central path of t*f + barrier with Newton
    steps; ``method="frank-wolfe"`` runs conditional-gradient iterations. Both
    report the same linearization certificate. Infeasible specs return an
    OptResult with status Infeasible and no state.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    try:
        if method == "barrier":
            return _minimize_barrier(spec, ch, tol)
        if method == "frank-wolfe":
            return _minimize_frank_wolfe(spec, ch, tol, max_iter)
    except InfeasibleError:
        return OptResult(None, math.inf, math.inf, 0.0, 0, Status.INFEASIBLE)
    raise ValueError(f"unknown method {method!r}")
