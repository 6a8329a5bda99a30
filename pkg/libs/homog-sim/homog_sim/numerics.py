"""Sparse Krylov solvers (Jacobi-preconditioned CG / BiCGStab) and implicit Euler stepping."""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from homog_sim.presets import Array

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SparseSystem:
    """A x = b with A in CSR form."""

    matrix: sp.csr_matrix
    rhs: Array

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {n}x{m}")
        if self.rhs.shape != (n,):
            raise ValueError(f"rhs has shape {self.rhs.shape}, expected ({n},)")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.T
        scale = max(abs(self.matrix).max(), 1.0)
        return diff.nnz == 0 or abs(diff).max() <= tol * scale


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0
    wall_time: float = 0.0
    history: list[float] = field(default_factory=list)


class SolverError(RuntimeError):
    """A Krylov solve failed; carries the best iterate and its statistics."""

    def __init__(self, message: str, best: Array, stats: SolveStats):
        super().__init__(message)
        self.best = best
        self.stats = stats


Callback = Callable[[int, float], None]


def _jacobi(system: SparseSystem) -> Array:
    diag = system.matrix.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SolverError(
            f"zero diagonal in {zero.size} row(s), first at {int(zero[0])}",
            np.zeros(system.n),
            SolveStats(),
        )
    return 1.0 / diag


def cg_solve(
    system: SparseSystem,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: Array | None = None,
    callback: Callback | None = None,
) -> tuple[Array, SolveStats]:
    """
    Preconditioned conjugate gradients for SPD systems.

    Converged when ||A x - b|| <= tol ||b||.

    Raises:
        SolverError: zero diagonal or no convergence within max_iter (10 n by default).
    """
    start = time.perf_counter()
    A, b = system.matrix, system.rhs
    n = system.n
    max_iter = 10 * n if max_iter is None else max_iter
    dinv = _jacobi(system)
    stats = SolveStats()

    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        stats.wall_time = time.perf_counter() - start
        return np.zeros(n), stats
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    stats.history.append(rnorm / bnorm)
    if rnorm <= tol * bnorm:
        stats.residual = rnorm / bnorm
        stats.wall_time = time.perf_counter() - start
        return x, stats

    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    best, best_res = x.copy(), rnorm
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError(
                f"CG breakdown at iteration {it}: matrix is not positive definite", best, stats
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        stats.iterations = it
        stats.history.append(rnorm / bnorm)
        if callback is not None:
            callback(it, rnorm / bnorm)
        if rnorm < best_res:
            best, best_res = x.copy(), rnorm
        if rnorm <= tol * bnorm:
            break
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    stats.residual = best_res / bnorm
    stats.wall_time = time.perf_counter() - start
    if best_res > tol * bnorm:
        raise SolverError(
            f"CG did not converge in {max_iter} iterations (residual {stats.residual:.3e} > {tol:.1e})",
            best,
            stats,
        )
    logger.debug("CG converged: n=%d iterations=%d residual=%.3e", n, stats.iterations, stats.residual)
    return x, stats


def bicgstab_solve(
    system: SparseSystem,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: Array | None = None,
    callback: Callback | None = None,
) -> tuple[Array, SolveStats]:
    """Right-preconditioned BiCGStab for nonsymmetric systems. Same contract as cg_solve."""
    start = time.perf_counter()
    A, b = system.matrix, system.rhs
    n = system.n
    max_iter = 10 * n if max_iter is None else max_iter
    dinv = _jacobi(system)
    stats = SolveStats()

    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        stats.wall_time = time.perf_counter() - start
        return np.zeros(n), stats
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    stats.history.append(rnorm / bnorm)
    best, best_res = x.copy(), rnorm
    if rnorm <= tol * bnorm:
        stats.residual = rnorm / bnorm
        stats.wall_time = time.perf_counter() - start
        return x, stats

    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    for it in range(1, max_iter + 1):
        rho_new = float(r_hat @ r)
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = dinv * p
        v = A @ p_hat
        denom = float(r_hat @ v)
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if float(np.linalg.norm(s)) <= tol * bnorm:
            x += alpha * p_hat
            r = s
        else:
            s_hat = dinv * s
            t = A @ s_hat
            tt = float(t @ t)
            if tt == 0.0:
                break
            omega = float(t @ s) / tt
            x += alpha * p_hat + omega * s_hat
            r = s - omega * t
        rnorm = float(np.linalg.norm(r))
        stats.iterations = it
        stats.history.append(rnorm / bnorm)
        if callback is not None:
            callback(it, rnorm / bnorm)
        if rnorm < best_res:
            best, best_res = x.copy(), rnorm
        if rnorm <= tol * bnorm or omega == 0.0:
            break
    # recompute the true residual of the best iterate
    best_res = float(np.linalg.norm(b - A @ best))
    stats.residual = best_res / bnorm
    stats.wall_time = time.perf_counter() - start
    if best_res > tol * bnorm:
        raise SolverError(
            f"BiCGStab did not converge in {stats.iterations} iterations "
            f"(residual {stats.residual:.3e} > {tol:.1e})",
            best,
            stats,
        )
    logger.debug("BiCGStab converged: n=%d iterations=%d residual=%.3e", n, stats.iterations, stats.residual)
    return best, stats


Method = Literal["auto", "cg", "bicgstab"]


def solve(
    system: SparseSystem,
    method: Method = "auto",
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: Array | None = None,
) -> tuple[Array, SolveStats]:
    """Dispatch to CG for symmetric systems, BiCGStab otherwise."""
    if method == "auto":
        method = "cg" if system.is_symmetric() else "bicgstab"
    if method == "cg":
        return cg_solve(system, tol=tol, max_iter=max_iter, x0=x0)
    return bicgstab_solve(system, tol=tol, max_iter=max_iter, x0=x0)


def implicit_euler_step(
    mass: Array,
    stiffness: sp.spmatrix,
    state: Array,
    dt: float,
    tol: float = DEFAULT_TOL,
    forcing: Array | None = None,
    method: Method = "auto",
) -> tuple[Array, SolveStats]:
    """
    One backward Euler step: solve (diag(mass) + dt A) w = mass * state + dt * forcing.

    The previous state is the initial guess.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    mass = np.asarray(mass, dtype=float)
    state = np.asarray(state, dtype=float)
    rhs = mass * state
    if forcing is not None:
        rhs = rhs + dt * forcing
    if stiffness.nnz == 0:
        return rhs / mass, SolveStats()
    matrix = sp.csr_matrix(sp.diags(mass) + dt * stiffness)
    return solve(SparseSystem(matrix, rhs), method=method, tol=tol, x0=state)
