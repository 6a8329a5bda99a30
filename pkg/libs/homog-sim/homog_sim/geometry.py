"""Locally-periodic two-phase medium built from the level set S(x, y) = |y| - r(x)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt
from homog_core import RunConfig
from scipy import ndimage

from homog_sim.presets import Array, Radius

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]


class Phase(Enum):
    """Phase label of a grid node."""

    HIGH = "high"
    LOW = "low"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LevelSetSpec:
    """Circular inclusions of radius r(x) (cell units) inside the rectangle omega."""

    radius: Radius
    r_min: float
    r_max: float
    omega: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    exclusion: float = SQRT2

    def __post_init__(self):
        if not (0.0 <= self.r_min <= self.r_max < 0.5):
            raise ValueError(
                f"radius bounds must satisfy 0 <= r_min <= r_max < 0.5, got [{self.r_min}, {self.r_max}]"
            )
        if self.r_min == 0.0 and self.r_max > 0.0:
            raise ValueError("r_min = 0 is only allowed for a radius that is identically 0")
        x0, x1, y0, y1 = self.omega
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"omega must be a nondegenerate rectangle, got {self.omega}")
        # sampled bound check
        xs = np.linspace(x0, x1, 33)
        ys = np.linspace(y0, y1, 33)
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        r = self.radius(pts)
        if r.min() < self.r_min - 1e-12 or r.max() > self.r_max + 1e-12:
            raise ValueError(
                f"r(x) ranges over [{r.min():.6g}, {r.max():.6g}], outside [{self.r_min}, {self.r_max}]"
            )

    @classmethod
    def constant(cls, r0: float, **kw) -> LevelSetSpec:
        return cls(radius=Radius.constant(r0), r_min=r0, r_max=r0, **kw)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> LevelSetSpec:
        geo = cfg.geometry
        r_min, r_max = geo.radius_bounds()
        return cls(
            radius=Radius(geo.radius), r_min=r_min, r_max=r_max, omega=geo.omega, exclusion=geo.exclusion
        )

    def level_set(self, x: Array, y: Array) -> Array:
        return np.linalg.norm(y, axis=-1) - self.radius(x)

    def max_slope(self) -> float:
        return self.radius.spec.max_slope()


def cell_coordinates(x: Array, epsilon: float) -> tuple[IntArray, Array]:
    """Cell index j = round(x/eps) and cell coordinate y = x/eps - j in U = [-1/2, 1/2]^2."""
    s = np.asarray(x, dtype=float) / epsilon
    j = np.rint(s)
    return j.astype(np.int64), s - j


@dataclass(frozen=True)
class Grid:
    """Uniform node grid x = x0 + i*h, y = y0 + k*h, i = 0..nx, k = 0..ny; arrays index [i, k]."""

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def size(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    def axes(self) -> tuple[Array, Array]:
        return (
            self.x0 + self.h * np.arange(self.nx + 1),
            self.y0 + self.h * np.arange(self.ny + 1),
        )

    def coords(self) -> Array:
        xs, ys = self.axes()
        return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)

    def boundary_mask(self) -> BoolArray:
        b = np.zeros(self.shape, dtype=bool)
        b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
        return b

    def weights(self) -> Array:
        """Nodal quadrature weights (control-volume areas, halved on edges)."""
        wx = np.full(self.nx + 1, self.h)
        wy = np.full(self.ny + 1, self.h)
        wx[[0, -1]] *= 0.5
        wy[[0, -1]] *= 0.5
        return np.outer(wx, wy)

    def same(self, other: Grid) -> bool:
        return (self.nx, self.ny) == (other.nx, other.ny) and np.allclose(
            (self.x0, self.y0, self.h), (other.x0, other.y0, other.h), rtol=1e-12, atol=1e-15
        )


@dataclass(frozen=True)
class InterfaceFaces:
    """Grid faces (node-to-node edges) separating a high node from a low node."""

    axis: IntArray  # 0: edge along x1, 1: edge along x2
    i: IntArray  # lower node of the edge
    k: IntArray
    owner: IntArray  # row of cell_index_set owning the low side
    midpoint: Array  # (F, 2)
    weight: Array  # arc-length weight h / (|nu0_1| + |nu0_2|)

    def __len__(self) -> int:
        return int(self.axis.size)


@dataclass(frozen=True, eq=False)
class MediumGeometry:
    """The eps-indexed perforated domain on one fine grid. Immutable after build_medium."""

    spec: LevelSetSpec
    epsilon: float
    grid: Grid
    cell_index_set: IntArray  # (K, 2) retained cell indices j
    low: BoolArray  # phase mask, True on low-phase nodes
    owner: IntArray  # row of cell_index_set for low nodes, -1 elsewhere
    ring: BoolArray  # nodes of the boundary ring (outside every retained cell)
    block: tuple[float, float, float, float]  # union of retained cells, empty when K == 0
    interface_faces: InterfaceFaces = field(repr=False)

    @property
    def high(self) -> BoolArray:
        return ~self.low

    @property
    def interface_tolerance(self) -> float:
        return self.grid.h / (2.0 * self.epsilon)

    def phase_mask(self) -> npt.NDArray[np.str_]:
        return np.where(self.low, Phase.LOW.value, Phase.HIGH.value)

    def counts(self) -> tuple[int, int]:
        n_low = int(self.low.sum())
        return self.grid.size - n_low, n_low

    def low_area(self) -> float:
        return float((self.grid.weights() * self.low).sum())


def retained_cells(spec: LevelSetSpec, epsilon: float) -> IntArray:
    """Cells j whose center eps*j lies at least max(exclusion, 1/2)*eps from the boundary of omega."""
    x0, x1, y0, y1 = spec.omega
    reach = max(spec.exclusion, 0.5) * epsilon - 1e-12 * epsilon
    out = []
    for j1 in range(math.floor(x0 / epsilon) - 1, math.ceil(x1 / epsilon) + 2):
        c1 = j1 * epsilon
        d1 = min(c1 - x0, x1 - c1)
        if d1 < reach:
            continue
        for j2 in range(math.floor(y0 / epsilon) - 1, math.ceil(y1 / epsilon) + 2):
            c2 = j2 * epsilon
            if min(d1, c2 - y0, y1 - c2) >= reach:
                out.append((j1, j2))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(out, dtype=np.int64)


def _ratio(a: float, b: float) -> int:
    q = a / b
    k = round(q)
    if k < 1 or abs(q - k) > 1e-9 * q:
        raise ValueError(f"{b:.6g} does not divide {a:.6g}")
    return k


def build_medium(spec: LevelSetSpec, epsilon: float, h: float) -> MediumGeometry:
    """
    Construct the perforated medium at scale epsilon on a node grid of spacing h.

    Raises:
        ValueError: 1/epsilon not an integer, h not dividing epsilon or omega,
            or inclusions under-resolved (eps * r_min < 4h).
    """
    _ratio(1.0, epsilon)
    try:
        _ratio(epsilon, h)
    except ValueError as e:
        raise ValueError(f"h={h} must divide epsilon={epsilon}") from e
    x0, x1, y0, y1 = spec.omega
    nx, ny = _ratio(x1 - x0, h), _ratio(y1 - y0, h)
    if spec.r_min > 0.0 and epsilon * spec.r_min < 4.0 * h * (1.0 - 1e-12):
        raise ValueError(
            f"inclusions under-resolved: eps*r_min={epsilon * spec.r_min:.6g} < 4h={4 * h:.6g}"
        )
    if spec.r_min > 0.0 and epsilon * spec.max_slope() > 0.25 * spec.r_min:
        logger.warning(
            "radius varies by more than r_min/4 across one cell at eps=%g (eps*max|grad r|=%.3g)",
            epsilon,
            epsilon * spec.max_slope(),
        )

    grid = Grid(x0=x0, y0=y0, h=h, nx=nx, ny=ny)
    cells = retained_cells(spec, epsilon) if spec.r_max > 0.0 else np.zeros((0, 2), np.int64)
    X = grid.coords()
    J, Y = cell_coordinates(X, epsilon)

    owner = np.full(grid.shape, -1, dtype=np.int64)
    if len(cells):
        jmin = cells.min(axis=0)
        span = cells.max(axis=0) - jmin + 1
        lookup = np.full(tuple(span), -1, dtype=np.int64)
        lookup[cells[:, 0] - jmin[0], cells[:, 1] - jmin[1]] = np.arange(len(cells))
        rel = J - jmin
        valid = (rel[..., 0] >= 0) & (rel[..., 0] < span[0]) & (rel[..., 1] >= 0) & (rel[..., 1] < span[1])
        idx = np.full(grid.shape, -1, dtype=np.int64)
        idx[valid] = lookup[rel[valid][:, 0], rel[valid][:, 1]]
        inside = (idx >= 0) & (np.linalg.norm(Y, axis=-1) < spec.radius(X))
        owner[inside] = idx[inside]
        half = 0.5 * epsilon
        block = (
            float(cells[:, 0].min() * epsilon - half),
            float(cells[:, 0].max() * epsilon + half),
            float(cells[:, 1].min() * epsilon - half),
            float(cells[:, 1].max() * epsilon + half),
        )
        tol = 1e-12 * max(1.0, abs(x1), abs(y1))
        ring = ~(
            (X[..., 0] >= block[0] - tol)
            & (X[..., 0] <= block[1] + tol)
            & (X[..., 1] >= block[2] - tol)
            & (X[..., 1] <= block[3] + tol)
        )
    else:
        block = (x0, x0, y0, y0)
        ring = np.ones(grid.shape, dtype=bool)
    low = owner >= 0

    faces = _interface_faces(grid, X, low, owner, cells, epsilon)
    geom = MediumGeometry(
        spec=spec,
        epsilon=epsilon,
        grid=grid,
        cell_index_set=_frozen(cells),
        low=_frozen(low),
        owner=_frozen(owner),
        ring=_frozen(ring),
        block=block,
        interface_faces=faces,
    )
    logger.info(
        "Built medium eps=%g h=%g: %d cells, %d low nodes, %d interface faces",
        epsilon,
        h,
        len(cells),
        int(low.sum()),
        len(faces),
    )
    return geom


def _interface_faces(
    grid: Grid, X: Array, low: BoolArray, owner: IntArray, cells: IntArray, epsilon: float
) -> InterfaceFaces:
    axes, iis, kks, owners, mids = [], [], [], [], []
    for axis in (0, 1):
        a = low[:-1, :] if axis == 0 else low[:, :-1]
        b = low[1:, :] if axis == 0 else low[:, 1:]
        ii, kk = np.nonzero(a != b)
        i2, k2 = (ii + 1, kk) if axis == 0 else (ii, kk + 1)
        own = np.where(low[ii, kk], owner[ii, kk], owner[i2, k2])
        axes.append(np.full(ii.size, axis, dtype=np.int64))
        iis.append(ii.astype(np.int64))
        kks.append(kk.astype(np.int64))
        owners.append(own)
        mids.append(0.5 * (X[ii, kk] + X[i2, k2]))
    midpoint = np.concatenate(mids) if mids else np.zeros((0, 2))
    own = np.concatenate(owners)
    if own.size:
        y = midpoint / epsilon - cells[own]
        nrm = np.linalg.norm(y, axis=-1)
        nu = y / np.where(nrm > 0, nrm, 1.0)[:, None]
        weight = grid.h / np.maximum(np.abs(nu).sum(axis=-1), 1.0)
    else:
        weight = np.zeros(0)
    return InterfaceFaces(
        axis=_frozen(np.concatenate(axes)),
        i=_frozen(np.concatenate(iis)),
        k=_frozen(np.concatenate(kks)),
        owner=_frozen(own),
        midpoint=_frozen(midpoint),
        weight=_frozen(weight),
    )


def classify_point(geom: MediumGeometry, x: Array) -> Phase:
    """Phase of an arbitrary point of omega (low iff inside some inclusion)."""
    x = np.asarray(x, dtype=float)
    x0, x1, y0, y1 = geom.spec.omega
    if not (x0 <= x[0] <= x1 and y0 <= x[1] <= y1):
        raise ValueError(f"point {tuple(x)} lies outside omega {geom.spec.omega}")
    j, y = cell_coordinates(x, geom.epsilon)
    cells = geom.cell_index_set
    if not len(cells) or not np.any(np.all(cells == j, axis=1)):
        return Phase.HIGH
    return Phase.LOW if float(np.linalg.norm(y)) < float(geom.spec.radius(x)) else Phase.HIGH


def phase_components(geom: MediumGeometry) -> tuple[int, int]:
    """
    Connected components of each phase (edge connectivity).

    Returns:
        (high components, low components). A valid medium has (1, |J|).
    """
    _, n_high = ndimage.label(geom.high)
    # 8-connectivity so that corner-touching inclusions would merge
    _, n_low = ndimage.label(geom.low, structure=np.ones((3, 3), dtype=int))
    return int(n_high), int(n_low)


def interface_measure(geom: MediumGeometry) -> float:
    """Arc length of the interface estimated from the staircase faces."""
    return float(geom.interface_faces.weight.sum())


def interface_point(spec: LevelSetSpec, epsilon: float, j: Array, angle: Array) -> tuple[Array, Array]:
    """
    Points of the interface of cell j at polar angles `angle`, and the tangent dx/d(angle).

    Solves rho = r(eps (j + rho e(angle))) by fixed-point iteration (a contraction when
    eps * max|grad r| < 1).
    """
    angle = np.asarray(angle, dtype=float)
    e = np.stack([np.cos(angle), np.sin(angle)], axis=-1)
    center = epsilon * np.asarray(j, dtype=float)
    rho = spec.radius(np.broadcast_arrays(center, e)[0])
    for _ in range(100):
        nxt = spec.radius(center + epsilon * rho[..., None] * e)
        done = np.max(np.abs(nxt - rho)) <= 1e-15
        rho = nxt
        if done:
            break
    x = center + epsilon * rho[..., None] * e
    g = spec.radius.gradient(x)
    e_perp = np.stack([-e[..., 1], e[..., 0]], axis=-1)
    drho = epsilon * rho * np.sum(g * e_perp, axis=-1) / (1.0 - epsilon * np.sum(g * e, axis=-1))
    tangent = epsilon * (drho[..., None] * e + rho[..., None] * e_perp)
    return x, tangent


@dataclass(frozen=True)
class NormalExpansion:
    """Leading normal nu0, first-order correction nu1 and unit tangent tau0 (arrays (..., 2))."""

    nu0: Array
    nu1: Array
    tau0: Array


def normal_expansion(
    spec: LevelSetSpec, x: Array, epsilon: float, tol: float = 1e-8
) -> NormalExpansion:
    """
    Expand the interface normal at points x of the interface.

    nu0 = grad_y S / |grad_y S| and nu1 = tau0 (tau0 . grad_x S) / |grad_y S| at (x, x/eps).

    Raises:
        ValueError: x off the interface (|S| > tol) or degenerate level set (grad_y S = 0).
    """
    x = np.asarray(x, dtype=float)
    _, y = cell_coordinates(x, epsilon)
    ny = np.linalg.norm(y, axis=-1)
    if np.any(ny == 0.0):
        raise ValueError("degenerate level set: grad_y S vanishes at the cell center")
    s = ny - spec.radius(x)
    if np.any(np.abs(s) > tol):
        raise ValueError(f"points are not on the interface (max |S| = {np.max(np.abs(s)):.3g} > {tol:.3g})")
    grad_y = y / ny[..., None]
    grad_y_norm = np.linalg.norm(grad_y, axis=-1)
    nu0 = grad_y / grad_y_norm[..., None]
    tau0 = np.stack([-nu0[..., 1], nu0[..., 0]], axis=-1)
    grad_x = -spec.radius.gradient(x)
    nu1 = tau0 * (np.sum(tau0 * grad_x, axis=-1) / grad_y_norm)[..., None]
    return NormalExpansion(nu0=nu0, nu1=nu1, tau0=tau0)


@dataclass(frozen=True)
class CutoffField:
    """chi_eps with analytic gradient and Laplacian on the grid nodes."""

    values: Array
    gradient: Array
    laplacian: Array
    width: float


def _smoothstep(t: Array) -> tuple[Array, Array, Array]:
    t = np.clip(t, 0.0, 1.0)
    s = t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    ds = 30.0 * t * t * (1.0 - t) ** 2
    d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    return s, ds, d2s


def _window(x: Array, lo: float, hi: float, w: float) -> tuple[Array, Array, Array]:
    """f(x) = s((x-lo)/w) s((hi-x)/w) and its first two derivatives."""
    sa, dsa, d2sa = _smoothstep((x - lo) / w)
    sb, dsb, d2sb = _smoothstep((hi - x) / w)
    f = sa * sb
    df = (dsa * sb - sa * dsb) / w
    d2f = (d2sa * sb - 2.0 * dsa * dsb + sa * d2sb) / (w * w)
    return f, df, d2f


def build_cutoff(geom: MediumGeometry) -> CutoffField:
    """
    Tensor-product quintic smoothstep over the block of retained cells, rising over
    a width (1/2 - r_max) eps / 2 from the block frame.
    """
    w = (0.5 - geom.spec.r_max) * geom.epsilon / 2.0
    xs, ys = geom.grid.axes()
    a1, b1, a2, b2 = geom.block
    if b1 - a1 < 2.0 * w or b2 - a2 < 2.0 * w:
        zeros = np.zeros(geom.grid.shape)
        return CutoffField(values=zeros, gradient=np.zeros((*geom.grid.shape, 2)), laplacian=zeros, width=w)
    f, df, d2f = _window(xs, a1, b1, w)
    g, dg, d2g = _window(ys, a2, b2, w)
    values = np.outer(f, g)
    gradient = np.stack([np.outer(df, g), np.outer(f, dg)], axis=-1)
    laplacian = np.outer(d2f, g) + np.outer(f, d2g)
    return CutoffField(values=values, gradient=gradient, laplacian=laplacian, width=w)


def cutoff_norms(geom: MediumGeometry, cutoff: CutoffField) -> tuple[float, float, float]:
    """L2(omega) norms of (1 - chi), grad chi and Laplacian chi by nodal quadrature."""
    wts = geom.grid.weights()
    one = float(np.sqrt(np.sum(wts * (1.0 - cutoff.values) ** 2)))
    grad = float(np.sqrt(np.sum(wts * np.sum(cutoff.gradient**2, axis=-1))))
    lap = float(np.sqrt(np.sum(wts * cutoff.laplacian**2)))
    return one, grad, lap


def dump_geometry(geom: MediumGeometry, cutoff: CutoffField) -> list[tuple[float, float, str, float]]:
    """Rows x, y, phase, chi for every grid node (x-major order)."""
    X = geom.grid.coords().reshape(-1, 2)
    phase = geom.phase_mask().reshape(-1)
    chi = cutoff.values.reshape(-1)
    return [(float(p[0]), float(p[1]), str(ph), float(c)) for p, ph, c in zip(X, phase, chi)]
