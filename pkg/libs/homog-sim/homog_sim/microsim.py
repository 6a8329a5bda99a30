"""
eps-resolved transmission problem on the fine node grid.

Both phases are carried by one continuous nodal field: D_h on high nodes, eps^2 D_l
on low nodes, harmonic-mean conductance on every face. This keeps the trace and the
diffusive flux continuous across the interface. Advection is upwinded and only acts
on high-high faces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from homog_core import RunConfig

from homog_sim.geometry import MediumGeometry, cell_coordinates
from homog_sim.numerics import DEFAULT_TOL, Method, implicit_euler_step
from homog_sim.presets import Array, BoundaryData, InitialV, Presets, SampleField, Velocity

if TYPE_CHECKING:
    from homog_sim.correctors import Reconstruction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MicroConfig:
    D_h: float
    D_l: float
    epsilon: float
    velocity: Velocity
    boundary: BoundaryData
    u_init: SampleField
    v_init: InitialV
    T: float
    dt: float
    sample_every: int = 10
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.D_h <= 0.0:
            raise ValueError(f"D_h must be positive, got {self.D_h}")
        if self.D_l < 0.0:
            raise ValueError(f"D_l must be nonnegative, got {self.D_l}")
        if self.dt <= 0.0 or self.T < 0.0:
            raise ValueError(f"need dt > 0 and T >= 0, got dt={self.dt}, T={self.T}")

    @classmethod
    def from_config(cls, cfg: RunConfig, epsilon: float | None = None) -> MicroConfig:
        eps = cfg.run.epsilon if epsilon is None else epsilon
        presets = Presets.from_config(cfg)
        return cls(
            D_h=cfg.physics.D_h,
            D_l=cfg.physics.D_l,
            epsilon=eps,
            velocity=presets.velocity,
            boundary=presets.boundary,
            u_init=presets.u_init,
            v_init=presets.v_init,
            T=cfg.discretization.T,
            dt=cfg.dt_for(eps),
            sample_every=cfg.discretization.sample_every,
        )


def time_grid(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the uniform step that lands exactly on T."""
    if T == 0.0:
        return 0, dt
    steps = max(1, math.ceil(T / dt - 1e-9))
    return steps, T / steps


def sample_steps(steps: int, every: int) -> list[int]:
    """Stored step indices: 0, every k-th step, and the last step."""
    out = list(range(0, steps + 1, every))
    if out[-1] != steps:
        out.append(steps)
    return out


@dataclass(frozen=True)
class MicroState:
    """u_eps on high nodes and v_eps on low nodes, in one (nx+1, ny+1) array."""

    t: float
    values: Array
    low: np.ndarray = field(repr=False)

    @property
    def u(self) -> np.ma.MaskedArray:
        return np.ma.masked_array(self.values, mask=self.low)

    @property
    def v(self) -> np.ma.MaskedArray:
        return np.ma.masked_array(self.values, mask=~self.low)


@dataclass(frozen=True, eq=False)
class MicroOperator:
    """
    Interior-row operator with the Dirichlet columns split off.

    du_I/dt + A_II u_I + A_IB u_B = 0
    """

    A_II: sp.csr_matrix
    A_IB: sp.csr_matrix
    interior: np.ndarray  # flat indices of interior nodes
    boundary: np.ndarray  # flat indices of boundary nodes
    conductance: tuple[Array, Array]  # face conductances (x-faces, y-faces), already divided by h^2
    face_velocity: tuple[Array, Array]  # normal velocity on dual faces, zero off high-high faces
    symmetric: bool


def stream_face_velocities(xs: Array, ys: Array, h: float, velocity: Velocity) -> tuple[Array, Array]:
    """Face-normal velocities on a node grid from stream-function differences (discretely divergence free)."""
    half = 0.5 * h
    # psi at dual-cell corners (x_i + h/2, y_k + h/2), i = -1..nx, k = -1..ny
    cx = np.concatenate([[xs[0] - half], xs + half])
    cy = np.concatenate([[ys[0] - half], ys + half])
    corners = np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1)
    psi = velocity.stream(corners)
    # x-face between node (i,k) and (i+1,k): corners (i+1/2, k-1/2) -> (i+1/2, k+1/2)
    wx = (psi[1:-1, 1:] - psi[1:-1, :-1]) / h
    # y-face between node (i,k) and (i,k+1): corners (i+1/2, k+1/2) -> (i-1/2, k+1/2)
    wy = (psi[:-1, 1:-1] - psi[1:, 1:-1]) / h
    return wx, wy


def assemble_micro(geom: MediumGeometry, cfg: MicroConfig) -> MicroOperator:
    """
    Assemble the fine-grid operator.

    Raises:
        ValueError: geometry built for a different eps
    """
    if not math.isclose(geom.epsilon, cfg.epsilon, rel_tol=1e-12):
        raise ValueError(f"geometry eps={geom.epsilon} does not match config eps={cfg.epsilon}")
    g = geom.grid
    shape = g.shape
    h2 = g.h * g.h
    diff = np.where(geom.low, cfg.epsilon**2 * cfg.D_l, cfg.D_h)

    def harmonic(a: Array, b: Array) -> Array:
        s = a + b
        return np.where(s > 0.0, 2.0 * a * b / np.where(s > 0.0, s, 1.0), 0.0) / h2

    kx = harmonic(diff[:-1, :], diff[1:, :])
    ky = harmonic(diff[:, :-1], diff[:, 1:])

    if cfg.velocity.active:
        wx, wy = stream_face_velocities(*g.axes(), g.h, cfg.velocity)
        wx = np.where(geom.high[:-1, :] & geom.high[1:, :], wx, 0.0)
        wy = np.where(geom.high[:, :-1] & geom.high[:, 1:], wy, 0.0)
    else:
        wx = np.zeros((shape[0] - 1, shape[1]))
        wy = np.zeros((shape[0], shape[1] - 1))

    flat = np.arange(g.size).reshape(shape)
    rows, cols, vals = [], [], []
    for p, q, k, w in (
        (flat[:-1, :], flat[1:, :], kx, wx),
        (flat[:, :-1], flat[:, 1:], ky, wy),
    ):
        p, q, k, w = p.ravel(), q.ravel(), k.ravel(), w.ravel()
        # diffusion, symmetric
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [k, k, -k, -k]
        # upwind q.grad u: inflow side only (w > 0 flows from p to q)
        inflow_q = np.maximum(w, 0.0) / g.h
        inflow_p = np.maximum(-w, 0.0) / g.h
        rows += [q, q, p, p]
        cols += [q, p, p, q]
        vals += [inflow_q, -inflow_q, inflow_p, -inflow_p]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.size, g.size)
    ).tocsr()
    bmask = g.boundary_mask().ravel()
    interior = np.flatnonzero(~bmask)
    boundary = np.flatnonzero(bmask)
    A_I = A[interior]
    op = MicroOperator(
        A_II=sp.csr_matrix(A_I[:, interior]),
        A_IB=sp.csr_matrix(A_I[:, boundary]),
        interior=interior,
        boundary=boundary,
        conductance=(kx, ky),
        face_velocity=(wx, wy),
        symmetric=not cfg.velocity.active,
    )
    logger.info("Assembled micro operator: %d unknowns, %d nonzeros", interior.size, op.A_II.nnz)
    return op


def initial_state(geom: MediumGeometry, cfg: MicroConfig) -> MicroState:
    """u_I on high nodes, v_I(x, x/eps) on low nodes."""
    X = geom.grid.coords()
    _, Y = cell_coordinates(X, cfg.epsilon)
    values = np.where(geom.low, cfg.v_init(X, Y), cfg.u_init(X))
    return MicroState(t=0.0, values=values, low=geom.low)


def step_micro(
    state: MicroState, op: MicroOperator, geom: MediumGeometry, cfg: MicroConfig, dt: float | None = None
) -> MicroState:
    """One implicit Euler step; u_b(t + dt) imposed on the boundary nodes."""
    dt = cfg.dt if dt is None else dt
    t_new = state.t + dt
    X = geom.grid.coords().reshape(-1, 2)
    ub = cfg.boundary(X[op.boundary], t_new)
    flat = state.values.ravel()
    method: Method = "cg" if op.symmetric else "bicgstab"
    w, stats = implicit_euler_step(
        mass=np.ones(op.interior.size),
        stiffness=op.A_II,
        state=flat[op.interior],
        dt=dt,
        tol=cfg.tol,
        forcing=-(op.A_IB @ ub),
        method=method,
    )
    out = np.empty_like(flat)
    out[op.interior] = w
    out[op.boundary] = ub
    logger.debug("Micro step t=%.6g: %d iterations", t_new, stats.iterations)
    return MicroState(t=t_new, values=out.reshape(state.values.shape), low=state.low)


def run_micro(geom: MediumGeometry, cfg: MicroConfig) -> list[MicroState]:
    """Integrate to T; returns the states at t = 0, every sample_every-th step and T."""
    op = assemble_micro(geom, cfg)
    steps, dt = time_grid(cfg.T, cfg.dt)
    keep = set(sample_steps(steps, cfg.sample_every))
    state = initial_state(geom, cfg)
    out = [state]
    for n in range(1, steps + 1):
        state = step_micro(state, op, geom, cfg, dt)
        if n == steps:
            state = MicroState(t=cfg.T, values=state.values, low=state.low)
        if n in keep:
            out.append(state)
    logger.info("Micro run eps=%g: %d steps of dt=%.4g, %d stored states", cfg.epsilon, steps, dt, len(out))
    return out


def energy_history(geom: MediumGeometry, trajectory: list[MicroState], boundary: BoundaryData) -> list[float]:
    """L2(omega) distance of each stored state from u_b at the same time."""
    X = geom.grid.coords()
    wts = geom.grid.weights()
    return [float(np.sqrt(np.sum(wts * (s.values - boundary(X, s.t)) ** 2))) for s in trajectory]


@dataclass(frozen=True)
class AssumptionReport:
    """
    Audit of the data restrictions the convergence estimate relies on.

    The initial data and the velocity may differ from their macro counterparts by
    O(eps^(1/2)); `violations` checks both gaps against constant * sqrt(eps).
    """

    epsilon: float
    initial_gap: float  # sup |sampled initial data - reconstructed u0I, v0I| over both phases
    max_divergence: float  # max |sum of outward face fluxes| over high dual cells
    velocity_gap: float  # max |face velocity - theta^-1 qbar . n| on high-high faces
    max_boundary_rate: float  # max d/dt u_b over boundary nodes and the time grid

    def violations(self, tol: float = 1e-12, constant: float = 1.0) -> list[str]:
        bound = constant * math.sqrt(self.epsilon)
        out = []
        if self.initial_gap > bound:
            out.append(
                f"initial data differ from the reconstructed initial data by {self.initial_gap:.3e} "
                f"(> {constant:g} eps^1/2 = {bound:.3e})"
            )
        if self.max_divergence > tol:
            out.append(f"discrete velocity divergence {self.max_divergence:.3e} exceeds {tol:g}")
        if self.velocity_gap > bound:
            out.append(
                f"velocity differs from theta^-1 qbar by {self.velocity_gap:.3e} "
                f"(> {constant:g} eps^1/2 = {bound:.3e})"
            )
        if self.max_boundary_rate > tol:
            out.append(f"boundary data increase in time (max d/dt u_b = {self.max_boundary_rate:.3e})")
        return out


def check_assumptions(geom: MediumGeometry, cfg: MicroConfig, initial: Reconstruction) -> AssumptionReport:
    """
    Compare the micro data with the t = 0 reconstruction of the two-scale model
    (correctors.initial_reconstruction): sampled initial data against u0I, v0I(x, x/eps),
    face velocities against theta^-1 qbar (zero when the reconstruction carries no q0).

    Raises:
        ValueError: the reconstruction is not taken at t = 0
    """
    if initial.t != 0.0:
        raise ValueError(f"data restrictions are checked against the t = 0 reconstruction, got t={initial.t}")
    op = assemble_micro(geom, cfg)
    state = initial_state(geom, cfg)
    high, low = geom.high, geom.low
    X = geom.grid.coords()
    gap_u = np.abs(state.values - initial.u0)[high]
    gap_v = np.abs(state.values - initial.v0)[low]
    initial_gap = float(max(gap_u.max(initial=0.0), gap_v.max(initial=0.0)))

    wx, wy = op.face_velocity
    q = initial.q0 if initial.q0 is not None else np.zeros((*geom.grid.shape, 2))
    qx = 0.5 * (q[:-1, :, 0] + q[1:, :, 0])
    qy = 0.5 * (q[:, :-1, 1] + q[:, 1:, 1])
    gap_x = np.abs(wx - qx)[high[:-1, :] & high[1:, :]]
    gap_y = np.abs(wy - qy)[high[:, :-1] & high[:, 1:]]
    velocity_gap = float(max(gap_x.max(initial=0.0), gap_y.max(initial=0.0)))

    max_div = 0.0
    if cfg.velocity.active:
        fx, fy = stream_face_velocities(*geom.grid.axes(), geom.grid.h, cfg.velocity)
        div = np.zeros(geom.grid.shape)
        div[:-1, :] += fx
        div[1:, :] -= fx
        div[:, :-1] += fy
        div[:, 1:] -= fy
        max_div = float(np.max(np.abs(div[1:-1, 1:-1]))) * geom.grid.h

    steps, dt = time_grid(cfg.T, cfg.dt)
    xb = X.reshape(-1, 2)[op.boundary]
    rate = max(
        (float(np.max(cfg.boundary.time_derivative(xb, n * dt))) for n in range(steps + 1)),
        default=0.0,
    )
    return AssumptionReport(
        epsilon=cfg.epsilon,
        initial_gap=initial_gap,
        max_divergence=max_div,
        velocity_gap=velocity_gap,
        max_boundary_rate=max(rate, 0.0),
    )
