"""
Two-scale limit model: a macro equation on an H-grid, with a radial diffusion
problem on the inclusion B(x) attached to every macro node.

Each step condenses the radial unknowns into a Dirichlet-to-Neumann relation
F = alpha * g - beta (exchange flux for trace value g), solves the macro system
once, and then recovers the radial profiles from the new trace.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from homog_core import RunConfig

from homog_sim.cell import EffectiveTable
from homog_sim.microsim import sample_steps, stream_face_velocities, time_grid
from homog_sim.numerics import DEFAULT_TOL, Method, implicit_euler_step
from homog_sim.presets import Array, BoundaryData, InitialV, Presets, Radius, SampleField, Velocity

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TwoScaleConfig:
    H: float
    m: int
    D_l: float
    table: EffectiveTable
    radius: Radius
    omega: tuple[float, float, float, float]
    velocity: Velocity
    boundary: BoundaryData
    u_init: SampleField
    v_init: InitialV
    T: float
    dt: float
    sample_every: int = 10
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"need at least 2 radial cells, got m={self.m}")
        if self.D_l < 0.0:
            raise ValueError(f"D_l must be nonnegative, got {self.D_l}")
        if self.dt <= 0.0 or self.T < 0.0:
            raise ValueError(f"need dt > 0 and T >= 0, got dt={self.dt}, T={self.T}")

    @classmethod
    def from_config(cls, cfg: RunConfig, table: EffectiveTable, epsilon: float | None = None) -> TwoScaleConfig:
        """dt follows the micro run at `epsilon` so both trajectories share their sample times."""
        eps = cfg.run.epsilon if epsilon is None else epsilon
        presets = Presets.from_config(cfg)
        return cls(
            H=cfg.discretization.H,
            m=cfg.discretization.m,
            D_l=cfg.physics.D_l,
            table=table,
            radius=presets.radius,
            omega=cfg.geometry.omega,
            velocity=presets.velocity,
            boundary=presets.boundary,
            u_init=presets.u_init,
            v_init=presets.v_init,
            T=cfg.discretization.T,
            dt=cfg.dt_for(eps),
            sample_every=cfg.discretization.sample_every,
        )


@dataclass(frozen=True, eq=False)
class MacroGrid:
    """Macro node grid with the per-node cell data theta, D, r."""

    xs: Array
    ys: Array
    H: float
    r: Array  # (Nx+1, Ny+1)
    theta: Array
    D: Array  # (Nx+1, Ny+1, 2, 2)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.xs.size, self.ys.size)

    def coords(self) -> Array:
        return np.stack(np.meshgrid(self.xs, self.ys, indexing="ij"), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        b = np.zeros(self.shape, dtype=bool)
        b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
        return b


def build_macro_grid(cfg: TwoScaleConfig) -> MacroGrid:
    x0, x1, y0, y1 = cfg.omega
    nx, ny = round((x1 - x0) / cfg.H), round((y1 - y0) / cfg.H)
    if abs(nx * cfg.H - (x1 - x0)) > 1e-9 or abs(ny * cfg.H - (y1 - y0)) > 1e-9:
        raise ValueError(f"H={cfg.H} does not tile omega {cfg.omega}")
    xs = x0 + cfg.H * np.arange(nx + 1)
    ys = y0 + cfg.H * np.arange(ny + 1)
    X = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    r = cfg.radius(X)
    return MacroGrid(xs=xs, ys=ys, H=cfg.H, r=r, theta=cfg.table.theta(r), D=cfg.table.tensor(r))


@dataclass(frozen=True, eq=False)
class RadialMesh:
    """Cell-centered radial mesh rho_k = (k + 1/2) r / m on every macro node (cell units)."""

    r: Array  # (N,)
    m: int
    D_l: float
    volume: Array = field(init=False)  # (N, m) annulus areas, sum = pi r^2
    inner: Array = field(init=False)  # (N, m-1) transmissibility between cells k, k+1
    outer: Array = field(init=False)  # (N,) transmissibility of the last half cell to rho = r

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        delta = r / self.m
        k = np.arange(self.m)
        vol = np.pi * delta[:, None] ** 2 * ((k + 1.0) ** 2 - k**2)[None, :]
        inner = np.broadcast_to(2.0 * np.pi * self.D_l * (k[:-1] + 1.0), (r.size, self.m - 1))
        # 2 pi r D_l / (delta / 2) = 4 pi m D_l, zero where there is no inclusion
        outer = np.where(r > 0.0, 4.0 * np.pi * self.m * self.D_l, 0.0)
        object.__setattr__(self, "volume", vol)
        object.__setattr__(self, "inner", np.array(inner))
        object.__setattr__(self, "outer", outer)

    @property
    def has_inclusion(self) -> Array:
        return self.r > 0.0

    def radii(self) -> Array:
        return (np.arange(self.m) + 0.5)[None, :] * (self.r / self.m)[:, None]

    def system(self, dt: float) -> tuple[Array, Array, Array]:
        """Tridiagonal (lower, diag, upper) of V + dt L, batched over nodes."""
        n = self.r.size
        lower = np.zeros((n, self.m))
        upper = np.zeros((n, self.m))
        diag = self.volume.copy()
        diag[:, :-1] += dt * self.inner
        diag[:, 1:] += dt * self.inner
        diag[:, -1] += dt * self.outer
        upper[:, :-1] = -dt * self.inner
        lower[:, 1:] = -dt * self.inner
        # nodes without inclusion keep an identity system
        none = ~self.has_inclusion
        diag[none] = 1.0
        lower[none] = 0.0
        upper[none] = 0.0
        return lower, diag, upper


def thomas(lower: Array, diag: Array, upper: Array, rhs: Array) -> Array:
    """Batched tridiagonal solve; arrays (N, m), rhs (N, m) or (N, m, c)."""
    n, m = diag.shape
    extra = rhs.shape[2:]
    c = np.zeros((n, m))
    d = np.zeros(rhs.shape)
    shape = (n,) + (1,) * len(extra)
    c[:, 0] = upper[:, 0] / diag[:, 0]
    d[:, 0] = rhs[:, 0] / diag[:, 0].reshape(shape)
    for k in range(1, m):
        denom = diag[:, k] - lower[:, k] * c[:, k - 1]
        c[:, k] = upper[:, k] / denom
        d[:, k] = (rhs[:, k] - lower[:, k].reshape(shape) * d[:, k - 1]) / denom.reshape(shape)
    x = np.zeros(rhs.shape)
    x[:, -1] = d[:, -1]
    for k in range(m - 2, -1, -1):
        x[:, k] = d[:, k] - c[:, k].reshape(shape) * x[:, k + 1]
    return x


@dataclass(frozen=True)
class DtN:
    """Condensed radial step: profile = v_p + g v_g, exchange flux F = alpha g - beta."""

    alpha: Array
    beta: Array
    v_p: Array
    v_g: Array


def dtn_coefficients(mesh: RadialMesh, v_prev: Array, dt: float) -> DtN:
    lower, diag, upper = mesh.system(dt)
    rhs = np.zeros((*v_prev.shape, 2))
    rhs[..., 0] = mesh.volume * v_prev
    rhs[:, -1, 1] = dt * mesh.outer
    sol = thomas(lower, diag, upper, rhs)
    v_p, v_g = sol[..., 0], sol[..., 1]
    alpha = mesh.outer * (1.0 - v_g[:, -1])
    beta = mesh.outer * v_p[:, -1]
    return DtN(alpha=alpha, beta=beta, v_p=v_p, v_g=v_g)


def dtn_flux(mesh: RadialMesh, v_prev: Array, dt: float, g: Array) -> Array:
    """Exchange flux into B after one radial step with trace value g."""
    c = dtn_coefficients(mesh, v_prev, dt)
    return c.alpha * g - c.beta


def radial_reference_flux(r: float, m: int, D_l: float, v_prev: Array, dt: float, g: float) -> float:
    """Dense brute-force radial step (single node) returning the boundary flux."""
    mesh = RadialMesh(r=np.array([r]), m=m, D_l=D_l)
    A = np.diag(mesh.volume[0])
    for k in range(m - 1):
        t = dt * mesh.inner[0, k]
        A[k, k] += t
        A[k + 1, k + 1] += t
        A[k, k + 1] -= t
        A[k + 1, k] -= t
    A[m - 1, m - 1] += dt * mesh.outer[0]
    b = mesh.volume[0] * np.asarray(v_prev, dtype=float)
    b[m - 1] += dt * mesh.outer[0] * g
    v = np.linalg.solve(A, b)
    return float(mesh.outer[0] * (g - v[m - 1]))


@dataclass(frozen=True)
class TwoScaleState:
    """u0 on macro nodes and the radial profile of v0 at every macro node."""

    t: float
    u: Array  # (Nx+1, Ny+1)
    v: Array  # (Nx+1, Ny+1, m), values at rho_k = (k + 1/2) r(x) / m

    def profile(self, i: int, k: int) -> tuple[Array, Array]:
        """Normalized radii s = rho / r and values, trace value at s = 1 included."""
        m = self.v.shape[-1]
        s = np.append((np.arange(m) + 0.5) / m, 1.0)
        return s, np.append(self.v[i, k], self.u[i, k])


@dataclass(frozen=True, eq=False)
class MacroOperator:
    grid: MacroGrid
    mesh: RadialMesh
    K_II: sp.csr_matrix
    K_IB: sp.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray
    symmetric: bool


def assemble_macro(cfg: TwoScaleConfig) -> MacroOperator:
    """
    Macro diffusion with harmonic-mean face conductances (D11 on x-faces, D22 on
    y-faces) plus upwinded advection by theta * q.
    """
    grid = build_macro_grid(cfg)
    shape = grid.shape
    H, H2 = grid.H, grid.H**2

    def harmonic(a: Array, b: Array) -> Array:
        return 2.0 * a * b / (a + b) / H2

    kx = harmonic(grid.D[:-1, :, 0, 0], grid.D[1:, :, 0, 0])
    ky = harmonic(grid.D[:, :-1, 1, 1], grid.D[:, 1:, 1, 1])
    if cfg.velocity.active:
        wx, wy = stream_face_velocities(grid.xs, grid.ys, H, cfg.velocity)
        wx = wx * 0.5 * (grid.theta[:-1, :] + grid.theta[1:, :])
        wy = wy * 0.5 * (grid.theta[:, :-1] + grid.theta[:, 1:])
    else:
        wx = np.zeros_like(kx)
        wy = np.zeros_like(ky)

    flat = np.arange(grid.xs.size * grid.ys.size).reshape(shape)
    rows, cols, vals = [], [], []
    for p, q, k, w in ((flat[:-1, :], flat[1:, :], kx, wx), (flat[:, :-1], flat[:, 1:], ky, wy)):
        p, q, k, w = p.ravel(), q.ravel(), k.ravel(), w.ravel()
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [k, k, -k, -k]
        inflow_q = np.maximum(w, 0.0) / H
        inflow_p = np.maximum(-w, 0.0) / H
        rows += [q, q, p, p]
        cols += [q, p, p, q]
        vals += [inflow_q, -inflow_q, inflow_p, -inflow_p]
    size = flat.size
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    K = K.tocsr()
    bmask = grid.boundary_mask().ravel()
    interior = np.flatnonzero(~bmask)
    boundary = np.flatnonzero(bmask)
    K_I = K[interior]
    return MacroOperator(
        grid=grid,
        mesh=RadialMesh(r=grid.r.ravel(), m=cfg.m, D_l=cfg.D_l),
        K_II=sp.csr_matrix(K_I[:, interior]),
        K_IB=sp.csr_matrix(K_I[:, boundary]),
        interior=interior,
        boundary=boundary,
        symmetric=not cfg.velocity.active,
    )


def initial_twoscale(op: MacroOperator, cfg: TwoScaleConfig) -> TwoScaleState:
    X = op.grid.coords()
    u = cfg.u_init(X)
    rho = op.mesh.radii().reshape(*op.grid.shape, cfg.m)
    y = np.stack([rho, np.zeros_like(rho)], axis=-1)
    v = cfg.v_init(np.broadcast_to(X[:, :, None, :], y.shape), y)
    v = np.where(op.grid.r[..., None] > 0.0, v, u[..., None])
    return TwoScaleState(t=0.0, u=u, v=v)


def step_twoscale(
    state: TwoScaleState, op: MacroOperator, cfg: TwoScaleConfig, dt: float | None = None
) -> TwoScaleState:
    """
    One implicit Euler step of the coupled system.

    The radial problems are condensed to F = alpha u_new - beta, the macro system
    (theta + dt (K + diag alpha)) u_new = theta u + dt beta is solved once, and the
    profiles are recovered from u_new, so the trace condition holds exactly.
    """
    dt = cfg.dt if dt is None else dt
    t_new = state.t + dt
    shape = op.grid.shape
    m = cfg.m
    dtn = dtn_coefficients(op.mesh, state.v.reshape(-1, m), dt)
    theta = op.grid.theta.ravel()
    ub = cfg.boundary(op.grid.coords().reshape(-1, 2)[op.boundary], t_new)

    I = op.interior
    stiffness = op.K_II + sp.diags(dtn.alpha[I])
    method: Method = "cg" if op.symmetric else "bicgstab"
    w, _ = implicit_euler_step(
        mass=theta[I],
        stiffness=stiffness,
        state=state.u.ravel()[I],
        dt=dt,
        tol=cfg.tol,
        forcing=dtn.beta[I] - op.K_IB @ ub,
        method=method,
    )
    u = np.empty(theta.size)
    u[I] = w
    u[op.boundary] = ub
    v = dtn.v_p + u[:, None] * dtn.v_g
    v = np.where(op.mesh.has_inclusion[:, None], v, u[:, None])
    return TwoScaleState(t=t_new, u=u.reshape(shape), v=v.reshape(*shape, m))


def run_twoscale(cfg: TwoScaleConfig) -> list[TwoScaleState]:
    """Integrate to T; stores t = 0, every sample_every-th step and T (same rule as run_micro)."""
    op = assemble_macro(cfg)
    steps, dt = time_grid(cfg.T, cfg.dt)
    keep = set(sample_steps(steps, cfg.sample_every))
    state = initial_twoscale(op, cfg)
    out = [state]
    for n in range(1, steps + 1):
        state = step_twoscale(state, op, cfg, dt)
        if n == steps:
            state = TwoScaleState(t=cfg.T, u=state.u, v=state.v)
        if n in keep:
            out.append(state)
    logger.info(
        "Two-scale run: %d macro nodes, m=%d, %d steps of dt=%.4g", op.grid.r.size, cfg.m, steps, dt
    )
    return out


def _bilinear_weights(xs: Array, ys: Array, x: Array) -> tuple[list[tuple[Array, Array]], list[Array]]:
    H1 = xs[1] - xs[0]
    H2 = ys[1] - ys[0]
    fi = np.clip((x[..., 0] - xs[0]) / H1, 0.0, xs.size - 1)
    fk = np.clip((x[..., 1] - ys[0]) / H2, 0.0, ys.size - 1)
    i0 = np.minimum(np.floor(fi).astype(np.int64), xs.size - 2)
    k0 = np.minimum(np.floor(fk).astype(np.int64), ys.size - 2)
    a, b = fi - i0, fk - k0
    nodes = [(i0, k0), (i0 + 1, k0), (i0, k0 + 1), (i0 + 1, k0 + 1)]
    weights = [(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b]
    return nodes, weights


def interpolate_macro(grid: MacroGrid, values: Array, x: Array) -> Array:
    """Bilinear interpolation of a nodal macro field at points x (..., 2)."""
    nodes, weights = _bilinear_weights(grid.xs, grid.ys, np.asarray(x, dtype=float))
    return sum(w * values[i, k] for (i, k), w in zip(nodes, weights))


def sample_v0(state: TwoScaleState, grid: MacroGrid, radius: Radius, x: Array, y: Array) -> Array:
    """
    v0(x, y) for |y| <= r(x): each of the four surrounding macro profiles is read at the
    normalized radius |y| / r(x) (linear in radius, flat below the first cell center,
    trace u0 at the rim), then combined bilinearly in x.

    Raises:
        ValueError: some |y| > r(x)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = radius(x)
    ny = np.linalg.norm(y, axis=-1)
    if np.any(ny > rx * (1.0 + 1e-12) + 1e-15):
        raise ValueError("sample_v0 needs |y| <= r(x)")
    s = np.where(rx > 0.0, ny / np.where(rx > 0.0, rx, 1.0), 1.0)
    m = state.v.shape[-1]
    # knots at (j + 1/2) / m for j < m, and the rim s = 1
    pos = np.clip(s * m - 0.5, 0.0, m - 0.5)
    j0 = np.minimum(np.floor(pos).astype(np.int64), m - 1)
    lam = np.where(j0 == m - 1, 2.0 * (pos - j0), pos - j0)
    nodes, weights = _bilinear_weights(grid.xs, grid.ys, x)
    out = np.zeros(np.shape(s))
    for (i, k), w in zip(nodes, weights):
        prof = np.concatenate([state.v[i, k], state.u[i, k][..., None]], axis=-1)
        lo = np.take_along_axis(prof, j0[..., None], axis=-1)[..., 0]
        hi = np.take_along_axis(prof, (j0 + 1)[..., None], axis=-1)[..., 0]
        out += w * ((1.0 - lam) * lo + lam * hi)
    return out


@dataclass(frozen=True)
class MassBalance:
    storage_rate: float  # d/dt sum over interior nodes of H^2 (theta u + integral of v over B)
    boundary_flux: float  # net operator flux into the interior nodes
    discrepancy: float  # relative mismatch

    @property
    def ok(self) -> bool:
        return self.discrepancy <= 0.01


def mass_balance(prev: TwoScaleState, new: TwoScaleState, op: MacroOperator) -> MassBalance:
    """Conservative-form audit of one step: storage change against the flux through the interior boundary."""
    dt = new.t - prev.t
    I = op.interior
    H2 = op.grid.H**2
    theta = op.grid.theta.ravel()[I]
    vol = op.mesh.volume[I]
    m = prev.v.shape[-1]
    du = (new.u.ravel()[I] - prev.u.ravel()[I]) * theta
    dv = np.sum(vol * (new.v.reshape(-1, m)[I] - prev.v.reshape(-1, m)[I]), axis=1)
    storage = float(H2 * np.sum(du + dv) / dt)
    u_new = new.u.ravel()
    flux = float(-H2 * np.sum(op.K_II @ u_new[I] + op.K_IB @ u_new[op.boundary]))
    scale = max(abs(storage), abs(flux), 1e-300)
    disc = abs(storage - flux) / scale
    if math.isclose(storage, 0.0, abs_tol=1e-14) and math.isclose(flux, 0.0, abs_tol=1e-14):
        disc = 0.0
    return MassBalance(storage_rate=storage, boundary_flux=flux, discrepancy=disc)
