"""Test the two-scale solver: radial condensation, macro stepping and conservation."""

from __future__ import annotations

import math

import numpy as np
import pytest
from homog_core import parse_config
from homog_sim import (
    BoundaryData,
    Radius,
    SampleField,
    TwoScaleConfig,
    TwoScaleState,
    Velocity,
    build_macro_grid,
    build_table,
    mass_balance,
    property_rng,
    run_twoscale,
    step_twoscale,
)
from homog_sim.twoscale import (
    RadialMesh,
    assemble_macro,
    dtn_flux,
    initial_twoscale,
    interpolate_macro,
    radial_reference_flux,
    sample_v0,
    thomas,
)

DT = 1.0 / 32.0


@pytest.fixture(scope="module")
def table():
    return build_table([0.0, 0.1, 0.2, 0.3], 32, threads=2)


def constant_v(value: float):
    def v_init(x, y):
        return np.full(np.asarray(x).shape[:-1], value)

    return v_init


def match_v(u_init: SampleField):
    def v_init(x, y):
        return u_init(x)

    return v_init


def two_scale_config(table, **kw) -> TwoScaleConfig:
    base = dict(
        H=0.125,
        m=4,
        D_l=1.0,
        table=table,
        radius=Radius.constant(0.25),
        omega=(0.0, 1.0, 0.0, 1.0),
        velocity=Velocity(),
        boundary=BoundaryData.constant(1.0),
        u_init=SampleField("constant", value=1.0),
        v_init=constant_v(1.0),
        T=3 * DT,
        dt=DT,
        sample_every=1,
        tol=1e-12,
    )
    base.update(kw)
    return TwoScaleConfig(**base)


def test_thomas_matches_dense_solve():
    """Test the batched tridiagonal solver with one and two right-hand sides."""
    rng = np.random.default_rng(0)
    n, m = 3, 6
    lower = -rng.random((n, m))
    upper = -rng.random((n, m))
    lower[:, 0] = 0.0
    upper[:, -1] = 0.0
    diag = 3.0 + rng.random((n, m))
    rhs = rng.standard_normal((n, m, 2))
    x = thomas(lower, diag, upper, rhs)
    x1 = thomas(lower, diag, upper, rhs[..., 0])
    for b in range(n):
        A = np.diag(diag[b]) + np.diag(lower[b, 1:], -1) + np.diag(upper[b, :-1], 1)
        np.testing.assert_allclose(x[b], np.linalg.solve(A, rhs[b]), atol=1e-12)
        np.testing.assert_allclose(x1[b], x[b, :, 0], atol=1e-14)


def test_radial_mesh_volumes():
    """Test that the annuli tile the disc and empty inclusions carry no exchange."""
    mesh = RadialMesh(r=np.array([0.0, 0.1, 0.3]), m=5, D_l=1.0)
    np.testing.assert_allclose(mesh.volume.sum(axis=1), math.pi * np.array([0.0, 0.01, 0.09]), atol=1e-15)
    assert mesh.outer[0] == 0.0
    assert mesh.has_inclusion.tolist() == [False, True, True]


def test_condensed_flux_matches_reference():
    """Test the Dirichlet-to-Neumann flux against a dense radial step."""
    rng = np.random.default_rng(1)
    r, m, D_l, dt = 0.2, 5, 0.7, 0.01
    v_prev = rng.standard_normal((1, m))
    mesh = RadialMesh(r=np.array([r]), m=m, D_l=D_l)
    for g in (0.3, -1.2):
        got = dtn_flux(mesh, v_prev, dt, np.array([g]))[0]
        assert got == pytest.approx(radial_reference_flux(r, m, D_l, v_prev[0], dt, g), rel=1e-10)


def test_constant_state_is_preserved(table):
    """Test that matching constant macro and radial data stay constant for 100 steps."""
    c = 0.4
    cfg = two_scale_config(
        table,
        boundary=BoundaryData.constant(c),
        u_init=SampleField("constant", value=c),
        v_init=constant_v(c),
        T=100 * DT,
        sample_every=25,
    )
    states = run_twoscale(cfg)
    assert [s.t for s in states] == pytest.approx([k * 25 * DT for k in range(5)])
    for s in states:
        assert np.max(np.abs(s.u - c)) <= 1e-12
        assert np.max(np.abs(s.v - c)) <= 1e-12


def test_mass_balance_without_advection(table):
    """Test that storage change equals the boundary flux over one step."""
    u_init = SampleField("bump", value=0.0, amplitude=1.0)
    cfg = two_scale_config(table, u_init=u_init, v_init=match_v(u_init), D_l=0.5)
    op = assemble_macro(cfg)
    prev = initial_twoscale(op, cfg)
    new = step_twoscale(prev, op, cfg)
    balance = mass_balance(prev, new, op)
    assert balance.ok
    assert balance.discrepancy <= 1e-6
    assert abs(balance.storage_rate) > 0.0


def test_trace_condition_holds(table):
    """Test that the radial profile is continuous with u0 at the rim after a step."""
    u_init = SampleField("bump", value=0.5, amplitude=1.0)
    cfg = two_scale_config(table, u_init=u_init, v_init=match_v(u_init))
    op = assemble_macro(cfg)
    new = step_twoscale(initial_twoscale(op, cfg), op, cfg)
    grid = op.grid
    x = np.array([[0.5, 0.5], [0.25, 0.625]])
    rim = np.array([[0.25, 0.0], [0.0, -0.25]])
    got = sample_v0(new, grid, cfg.radius, x, rim)
    np.testing.assert_allclose(got, interpolate_macro(grid, new.u, x), atol=1e-12)


def test_sample_v0_reads_profile(table):
    """Test the inner value, the rim value and the |y| <= r(x) check."""
    cfg = two_scale_config(table)
    grid = build_macro_grid(cfg)
    state = TwoScaleState(t=0.0, u=np.full(grid.shape, 3.0), v=np.full((*grid.shape, 4), 2.0))
    x = np.array([[0.3, 0.4], [0.3, 0.4]])
    y = np.array([[0.0, 0.0], [0.0, 0.25]])
    np.testing.assert_allclose(sample_v0(state, grid, cfg.radius, x, y), [2.0, 3.0], atol=1e-14)
    with pytest.raises(ValueError, match=r"\|y\| <= r\(x\)"):
        sample_v0(state, grid, cfg.radius, x[:1], np.array([[0.3, 0.0]]))
    s, values = state.profile(1, 1)
    assert s[-1] == 1.0
    assert values[-1] == 3.0


def test_interpolation_reproduces_bilinear_fields(table):
    """Test that bilinear macro data are interpolated exactly."""
    grid = build_macro_grid(two_scale_config(table))
    X = grid.coords()
    values = 1.0 + 2.0 * X[..., 0] - X[..., 1] + 3.0 * X[..., 0] * X[..., 1]
    pts = np.random.default_rng(2).random((20, 2))
    expected = 1.0 + 2.0 * pts[:, 0] - pts[:, 1] + 3.0 * pts[:, 0] * pts[:, 1]
    np.testing.assert_allclose(interpolate_macro(grid, values, pts), expected, atol=1e-12)


def test_macro_grid_must_tile(table):
    """Test that H has to divide omega."""
    with pytest.raises(ValueError, match="does not tile"):
        build_macro_grid(two_scale_config(table, H=0.3))


def test_advection_keeps_constants(table):
    """Test that the upwinded macro operator has zero row sums."""
    op = assemble_macro(two_scale_config(table, velocity=Velocity(kind="stream", amplitude=2.0)))
    ones = op.K_II @ np.ones(op.interior.size) + op.K_IB @ np.ones(op.boundary.size)
    np.testing.assert_allclose(ones, 0.0, atol=1e-9)
    assert not op.symmetric


def test_zero_exchange_decouples(table):
    """Test that D_l = 0 freezes the profiles and makes u0 independent of them."""
    u_init = SampleField("bump", value=0.0, amplitude=1.0)
    low = run_twoscale(two_scale_config(table, D_l=0.0, u_init=u_init, v_init=constant_v(0.0), T=8 * DT))
    high = run_twoscale(two_scale_config(table, D_l=0.0, u_init=u_init, v_init=constant_v(5.0), T=8 * DT))
    for a, b in zip(low, high):
        np.testing.assert_allclose(a.u, b.u, atol=1e-12)
        np.testing.assert_allclose(b.v, 5.0, atol=1e-12)
    weak = run_twoscale(two_scale_config(table, D_l=1e-9, u_init=u_init, v_init=constant_v(5.0), T=8 * DT))
    assert np.max(np.abs(weak[-1].u - high[-1].u)) <= 1e-6
    assert np.max(np.abs(weak[-1].u - high[-1].u)) > 0.0


@pytest.mark.parametrize("case", range(5))
def test_comparison_principle(table, case):
    """Test that ordered initial and boundary data stay ordered in both u0 and v0."""
    rng = property_rng(parse_config(), 100 + case)
    amplitude = float(rng.uniform(-2.0, 2.0))
    gap = float(rng.uniform(0.05, 1.0))
    lower_u = SampleField("bump", value=0.0, amplitude=amplitude)
    upper_u = SampleField("bump", value=gap, amplitude=amplitude + gap)
    common = dict(D_l=float(rng.uniform(0.1, 2.0)), T=6 * DT)
    lower = run_twoscale(
        two_scale_config(table, u_init=lower_u, v_init=match_v(lower_u), boundary=BoundaryData.constant(0.0), **common)
    )
    upper = run_twoscale(
        two_scale_config(table, u_init=upper_u, v_init=match_v(upper_u), boundary=BoundaryData.constant(gap), **common)
    )
    for a, b in zip(lower, upper):
        assert np.min(b.u - a.u) >= -1e-10
        assert np.min(b.v - a.v) >= -1e-10


def test_single_node_relaxes_to_boundary_value(table):
    """Test that one interior node with empty inclusions relaxes to the boundary value, monotonically in max norm."""
    c = 1.0
    cfg = two_scale_config(
        table,
        H=0.5,
        boundary=BoundaryData.constant(c),
        u_init=SampleField("constant", value=c),
        v_init=constant_v(0.0),
        T=128 * DT,
        sample_every=4,
    )
    states = run_twoscale(cfg)
    assert states[0].u.shape == (3, 3)
    gaps = [max(float(np.max(np.abs(s.u - c))), float(np.max(np.abs(s.v - c)))) for s in states]
    assert gaps[0] == pytest.approx(1.0)
    for before, after in zip(gaps, gaps[1:]):
        assert after <= before + 1e-10
    assert gaps[-1] <= 1e-6
    for s in states:
        assert s.v.min() >= -1e-12
        assert s.v.max() <= c + 1e-12
    assert states[1].u[1, 1] < c


def test_reflection_symmetry(table):
    """Test that symmetric data and a constant radius give symmetric macro and radial fields."""
    u_init = SampleField("bump", value=0.3, amplitude=1.0)
    cfg = two_scale_config(
        table, u_init=u_init, v_init=constant_v(-0.2), boundary=BoundaryData.constant(0.3), T=6 * DT
    )
    for s in run_twoscale(cfg):
        np.testing.assert_allclose(s.u, s.u[::-1, :], atol=1e-10)
        np.testing.assert_allclose(s.u, s.u.T, atol=1e-10)
        np.testing.assert_allclose(s.v, s.v[::-1, :, :], atol=1e-10)
        np.testing.assert_allclose(s.v, s.v.transpose(1, 0, 2), atol=1e-10)
