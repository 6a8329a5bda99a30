"""Test the periodic cell problems and the effective-coefficient table."""

from __future__ import annotations

import math

import numpy as np
import pytest
from homog_core import Stamp
from homog_sim import build_table, cell_energy, effective_tensor, read_table, solve_cell, write_table
from homog_sim.cell import cell_centers

RADII = [0.0, 0.1, 0.2, 0.3]


@pytest.fixture(scope="module")
def table():
    return build_table(RADII, 32, threads=2)


@pytest.fixture(scope="module")
def sol():
    return solve_cell(0.25, 64)


def test_empty_inclusion_gives_identity():
    """Test that r = 0 has no corrector and D = D_h I."""
    s = solve_cell(0.0, 32, D_h=2.0)
    assert np.all(s.M == 0.0)
    np.testing.assert_allclose(effective_tensor(s, D_h=2.0), 2.0 * np.eye(2), atol=1e-14)


def test_corrector_has_zero_mean(sol):
    """Test the normalization of M_j over Y."""
    for j in (0, 1):
        assert abs(float(sol.M[j][sol.in_y].mean())) <= 1e-12
        assert np.all(sol.M[j][~sol.in_y] == 0.0)


def test_tensor_symmetries(sol):
    """Test that a centered disc gives an isotropic diagonal tensor."""
    D = effective_tensor(sol)
    assert abs(D[0, 1]) <= 1e-8
    assert D[0, 0] == pytest.approx(D[1, 1], abs=1e-8)
    assert 0.0 < D[0, 0] < 1.0


def test_energy_matches_tensor(sol):
    """Test that D_jj is the cell energy of M_j."""
    D = effective_tensor(sol)
    for j in (0, 1):
        assert cell_energy(sol, j) == pytest.approx(D[j, j], rel=1e-10)


def test_corrector_minimizes_energy(sol):
    """Test that perturbing M_j on Y raises the energy."""
    c = cell_centers(sol.n)
    bump = np.sin(2.0 * math.pi * c)[:, None] * np.cos(2.0 * math.pi * c)[None, :]
    w = sol.M[0] + 1e-3 * bump * sol.in_y
    assert cell_energy(sol, 0, w) > cell_energy(sol, 0)


def test_corrector_disc_symmetries(sol):
    """Test that M_1 is odd in y1 and even in y2, and that M_2 is its transpose, for a centered disc."""
    M1, M2 = sol.M
    scale = float(np.max(np.abs(M1)))
    assert scale > 0.0
    np.testing.assert_allclose(M1[::-1, :], -M1, atol=1e-8 * scale)
    np.testing.assert_allclose(M1[:, ::-1], M1, atol=1e-8 * scale)
    np.testing.assert_allclose(M2, M1.T, atol=1e-8 * scale)


def test_corrector_is_periodic(table):
    """Test that M(r, y) repeats with period one in both directions, also between stored radii."""
    y = np.random.default_rng(3).uniform(-0.5, 0.5, (25, 2))
    r = np.full(25, 0.15)
    base = table.corrector(r, y)
    for shift in ([1.0, 0.0], [0.0, 1.0], [-1.0, 2.0]):
        np.testing.assert_allclose(table.corrector(r, y + np.array(shift)), base, atol=1e-12)

@pytest.mark.slow
def test_dilute_limit():
    """Test D against (1 - f) / (1 + f) for a small insulating inclusion."""
    f = 0.05
    s = solve_cell(math.sqrt(f / math.pi), 256)
    D = effective_tensor(s)
    assert D[0, 0] == pytest.approx((1.0 - f) / (1.0 + f), abs=0.01)


def test_cell_argument_checks():
    """Test the radius and resolution limits."""
    with pytest.raises(ValueError, match=r"\[0, 0.5\)"):
        solve_cell(0.5, 32)
    with pytest.raises(ValueError, match=">= 32"):
        solve_cell(0.2, 16)


def test_table_is_sound(table):
    """Test that the table has no broken invariants and D decreases with r."""
    assert table.violations() == []
    d = table.tensors[:, 0, 0]
    assert np.all(np.diff(d) < 0.0)
    assert table.tensors[0, 0, 0] == pytest.approx(1.0)


def test_table_interpolation(table):
    """Test sample reproduction, theta and the tabulated range."""
    np.testing.assert_allclose(table.tensor(np.array(RADII)), table.tensors, atol=1e-14)
    assert table.theta(np.array(0.2)) == pytest.approx(1.0 - math.pi * 0.04)
    mid = table.d(np.array([0.15]))[0]
    assert table.d(np.array([0.2]))[0] < mid < table.d(np.array([0.1]))[0]
    with pytest.raises(ValueError, match="outside tabulated range"):
        table.tensor(np.array([0.35]))


def test_table_corrector_lookup(table):
    """Test that M(r, y) at a stored radius and a cell center returns the stored value."""
    sol = table.solutions[1]
    c = cell_centers(32)
    i, k = 3, 20
    y = np.array([[c[i], c[k]]])
    got = table.corrector(np.array([0.1]), y)
    np.testing.assert_allclose(got[0], sol.M[:, i, k], atol=1e-12)


def test_table_arguments():
    """Test the radius-list checks of build_table."""
    with pytest.raises(ValueError, match="at least 4"):
        build_table([0.0, 0.1, 0.2], 32)
    with pytest.raises(ValueError, match="sorted"):
        build_table([0.0, 0.2, 0.1, 0.3], 32)


def test_table_file_keeps_values(table, tmp_path):
    """Test that a written table reads back without its cell solutions."""
    path = write_table(table, tmp_path / "table.csv", Stamp("0.1.0", "x"))
    loaded = read_table(path)
    np.testing.assert_array_equal(loaded.radii, table.radii)
    np.testing.assert_array_equal(loaded.tensors, table.tensors)
    assert loaded.n == 32
    assert not loaded.has_correctors
    with pytest.raises(ValueError, match="without cell solutions"):
        loaded.corrector(np.array([0.1]), np.zeros((1, 2)))


def test_table_interpolation_matches_direct_solve():
    """Test the interpolated D(0.15) against a cell problem solved at r = 0.15."""
    fine = build_table([0.05, 0.1, 0.2, 0.25], 64, threads=2)
    D = effective_tensor(solve_cell(0.15, 64))
    got = fine.tensor(np.array(0.15))
    assert got[0, 0] == pytest.approx(D[0, 0], rel=0.02)
    assert got[1, 1] == pytest.approx(D[1, 1], rel=0.02)
    assert abs(got[0, 1]) <= 1e-8
    assert fine.theta(np.array(0.15)) == pytest.approx(1.0 - math.pi * 0.15**2)
