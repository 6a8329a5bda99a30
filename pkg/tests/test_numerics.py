"""Test the Krylov solvers and the implicit Euler step."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from homog_sim import SolverError, SparseSystem, bicgstab_solve, cg_solve, implicit_euler_step, solve
from scipy.sparse.linalg import spsolve


def laplacian_2d(n: int) -> sp.csr_matrix:
    """Five-point Dirichlet Laplacian on an n x n interior grid (SPD)."""
    t = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    eye = sp.identity(n)
    return sp.csr_matrix(sp.kron(t, eye) + sp.kron(eye, t))


def convection_diffusion(n: int, w: float) -> sp.csr_matrix:
    """Laplacian plus an upwinded first-order term (nonsymmetric, diagonally dominant)."""
    up = sp.diags([-w * np.ones(n * n - 1), w * np.ones(n * n)], [-1, 0])
    return sp.csr_matrix(laplacian_2d(n) + up)


def test_cg_matches_direct_solve():
    """Test CG against a sparse direct solve."""
    A = laplacian_2d(12)
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    x, stats = cg_solve(SparseSystem(A, b), tol=1e-12)
    np.testing.assert_allclose(x, spsolve(A.tocsc(), b), rtol=0, atol=1e-9)
    assert stats.residual <= 1e-12
    assert stats.iterations > 0
    assert stats.history[0] == pytest.approx(1.0)


def test_bicgstab_matches_direct_solve():
    """Test BiCGStab on a nonsymmetric system."""
    A = convection_diffusion(10, 3.0)
    b = np.random.default_rng(1).standard_normal(A.shape[0])
    x, stats = bicgstab_solve(SparseSystem(A, b), tol=1e-12)
    np.testing.assert_allclose(x, spsolve(A.tocsc(), b), rtol=0, atol=1e-9)
    assert stats.residual <= 1e-12


def test_solve_dispatches_on_symmetry():
    """Test that auto picks a solver that handles both kinds of matrix."""
    sym = SparseSystem(laplacian_2d(6), np.ones(36))
    non = SparseSystem(convection_diffusion(6, 2.0), np.ones(36))
    assert sym.is_symmetric()
    assert not non.is_symmetric()
    for system in (sym, non):
        x, _ = solve(system)
        np.testing.assert_allclose(system.matrix @ x, system.rhs, atol=1e-8)


def test_zero_rhs_returns_zero():
    """Test the b = 0 shortcut."""
    x, stats = cg_solve(SparseSystem(laplacian_2d(4), np.zeros(16)), x0=np.ones(16))
    assert np.all(x == 0.0)
    assert stats.iterations == 0


def test_converged_initial_guess_is_returned():
    """Test that an exact initial guess needs no iterations."""
    A = laplacian_2d(5)
    x_true = np.linspace(0.0, 1.0, 25)
    x, stats = cg_solve(SparseSystem(A, A @ x_true), x0=x_true)
    assert stats.iterations == 0
    np.testing.assert_array_equal(x, x_true)


def test_zero_diagonal_raises():
    """Test that a zero diagonal entry is reported before iterating."""
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(SolverError, match="zero diagonal"):
        cg_solve(SparseSystem(A, np.ones(2)))
    with pytest.raises(SolverError, match="zero diagonal"):
        bicgstab_solve(SparseSystem(A, np.ones(2)))


def test_non_convergence_carries_best_iterate():
    """Test that running out of iterations raises with the best iterate and stats."""
    A = laplacian_2d(10)
    b = np.ones(100)
    with pytest.raises(SolverError) as err:
        cg_solve(SparseSystem(A, b), max_iter=1)
    assert err.value.stats.iterations == 1
    assert err.value.stats.residual > 1e-10
    assert err.value.best.shape == (100,)
    assert np.linalg.norm(A @ err.value.best - b) <= np.linalg.norm(b)


def test_indefinite_matrix_breaks_cg():
    """Test that CG detects a matrix that is not positive definite."""
    A = sp.csr_matrix(np.diag([1.0, -1.0]))
    with pytest.raises(SolverError):
        cg_solve(SparseSystem(A, np.array([1.0, 1.0])))


def test_system_shape_checks():
    """Test that non-square matrices and mismatched right-hand sides are rejected."""
    with pytest.raises(ValueError, match="square"):
        SparseSystem(sp.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(ValueError, match="rhs has shape"):
        SparseSystem(sp.csr_matrix(np.eye(3)), np.ones(2))


def test_implicit_euler_matches_direct_solve():
    """Test one backward Euler step against (M + dt A) w = M u + dt f."""
    A = laplacian_2d(8)
    rng = np.random.default_rng(2)
    mass = 1.0 + rng.random(64)
    u = rng.standard_normal(64)
    f = rng.standard_normal(64)
    dt = 0.05
    w, _ = implicit_euler_step(mass, A, u, dt, tol=1e-12, forcing=f)
    expected = spsolve(sp.csc_matrix(sp.diags(mass) + dt * A), mass * u + dt * f)
    np.testing.assert_allclose(w, expected, atol=1e-9)


def test_implicit_euler_without_stiffness():
    """Test that an empty operator reduces the step to the forcing update."""
    w, stats = implicit_euler_step(np.full(3, 2.0), sp.csr_matrix((3, 3)), np.ones(3), 0.5, forcing=np.ones(3))
    np.testing.assert_allclose(w, 1.25)
    assert stats.iterations == 0


def test_implicit_euler_rejects_bad_step():
    """Test that dt <= 0 is refused."""
    with pytest.raises(ValueError, match="dt must be positive"):
        implicit_euler_step(np.ones(2), sp.identity(2, format="csr"), np.ones(2), 0.0)


def test_poisson_1d_converges_at_second_order():
    """Test that -u'' = pi^2 sin(pi x) solved with the three-point stencil converges like h^2."""
    errors = []
    for n in (16, 32, 64):
        h = 1.0 / n
        x = h * np.arange(1, n)
        A = sp.csr_matrix(sp.diags([-np.ones(n - 2), 2.0 * np.ones(n - 1), -np.ones(n - 2)], [-1, 0, 1]) / h**2)
        u, _ = cg_solve(SparseSystem(A, np.pi**2 * np.sin(np.pi * x)), tol=1e-12)
        errors.append(float(np.max(np.abs(u - np.sin(np.pi * x)))))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders > 1.9) & (orders < 2.1))


@pytest.mark.parametrize("dt", [1e-2, 1.0, 1e2, 1e6])
def test_implicit_euler_is_unconditionally_stable(dt):
    """Test that one step never grows the mass-weighted norm, for symmetric and upwinded operators."""
    rng = np.random.default_rng(4)
    mass = 1.0 + rng.random(64)
    u = rng.standard_normal(64)
    for A in (laplacian_2d(8), convection_diffusion(8, 2.0)):
        w, _ = implicit_euler_step(mass, A, u, dt, tol=1e-12)
        assert np.sqrt(np.sum(mass * w * w)) <= np.sqrt(np.sum(mass * u * u)) * (1.0 + 1e-10)


def test_repeated_large_steps_decay():
    """Test that many steps far beyond the explicit limit decay monotonically to zero."""
    A = laplacian_2d(8)
    mass = np.ones(64)
    u = np.random.default_rng(5).standard_normal(64)
    norms = [float(np.linalg.norm(u))]
    for _ in range(20):
        u, _ = implicit_euler_step(mass, A, u, 1e3, tol=1e-12)
        norms.append(float(np.linalg.norm(u)))
    assert all(b <= a for a, b in zip(norms, norms[1:]))
    assert norms[-1] <= 1e-6 * norms[0]
