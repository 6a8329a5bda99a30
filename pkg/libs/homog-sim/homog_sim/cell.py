"""
Periodic cell problems around a disc of radius r and the tabulated effective
coefficients theta(r), D(r).

The cell U = [-1/2, 1/2]^2 carries an n x n cell-centered periodic grid. A cell
belongs to the inclusion B when its center lies inside the disc; faces touching B
are closed (zero conductance), which imposes the Neumann condition on the
staircase boundary of Y = U \\ B.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from homog_core import Stamp, read_csv, thread_cap, write_csv
from scipy import ndimage
from scipy.interpolate import PchipInterpolator

from homog_sim.numerics import SolveStats, SparseSystem, cg_solve
from homog_sim.presets import Array

logger = logging.getLogger(__name__)

CELL_TOL = 1e-12
TABLE_COLUMNS = ("r", "theta", "D11", "D12", "D21", "D22")


def cell_centers(n: int) -> Array:
    return -0.5 + (np.arange(n) + 0.5) / n


@dataclass(frozen=True, eq=False)
class CellSolution:
    """
    Correctors M_1, M_2 on the Y cells of the periodic grid (zero inside B).

    Attributes:
        M: (2, n, n), M[j] solves the cell problem for direction e_{j+1}
        grad: (2, 2, n, n), grad[j, d] = d M_j / d y_d at cell centers of Y
        face_grad: (2, 2, n, n), face_grad[j, d] is the difference quotient of M_j
            on the face between cell p and p + e_d (with the Neumann value on closed faces)
        in_y: (n, n) mask of Y cells
        open_faces: (2, n, n), open_faces[d] marks faces with both neighbours in Y
    """

    r: float
    n: int
    M: Array
    grad: Array
    face_grad: Array
    in_y: np.ndarray
    open_faces: np.ndarray
    stats: tuple[SolveStats, SolveStats] = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def theta(self) -> float:
        return 1.0 - np.pi * self.r**2

    @property
    def mask_area(self) -> float:
        return float(self.in_y.sum()) / self.n**2

    def extended(self) -> Array:
        """M with values inside B taken from the nearest Y cell (periodic images ignored)."""
        if self.in_y.all():
            return self.M
        _, (ii, kk) = ndimage.distance_transform_edt(~self.in_y, return_indices=True)
        return self.M[:, ii, kk]


def _cell_system(in_y: np.ndarray, n: int) -> tuple[sp.csr_matrix, Array, Array, np.ndarray, np.ndarray]:
    h = 1.0 / n
    idx = np.full((n, n), -1, dtype=np.int64)
    idx[in_y] = np.arange(int(in_y.sum()))
    rows, cols, vals = [], [], []
    rhs = np.zeros((2, int(in_y.sum())))
    open_faces = np.zeros((2, n, n), dtype=bool)
    for d in (0, 1):
        nb = np.roll(in_y, -1, axis=d)
        open_d = in_y & nb
        open_faces[d] = open_d
        p = idx[open_d]
        q = np.roll(idx, -1, axis=d)[open_d]
        one = np.ones(p.size)
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [one, one, -one, -one]
        # outward normal of the face is +e_d seen from p, -e_d seen from q
        np.add.at(rhs[d], p, h)
        np.add.at(rhs[d], q, -h)
    size = int(in_y.sum())
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    return matrix, rhs[0], rhs[1], idx, open_faces


def _face_gradients(M: Array, in_y: np.ndarray, open_faces: np.ndarray, n: int) -> Array:
    fg = np.zeros((2, 2, n, n))
    for j in (0, 1):
        for d in (0, 1):
            diff = (np.roll(M[j], -1, axis=d) - M[j]) * n
            closed = -1.0 if d == j else 0.0
            fg[j, d] = np.where(open_faces[d], diff, np.where(in_y, closed, 0.0))
    return fg


def solve_cell(r: float, n: int, D_h: float = 1.0, tol: float = CELL_TOL) -> CellSolution:
    """
    Solve -div_y(1_Y (grad M_j + e_j)) = 0, periodic, zero mean over Y.

    Raises:
        ValueError: r outside [0, 1/2) or n < 32
        SolverError: CG did not converge
    """
    if not (0.0 <= r < 0.5):
        raise ValueError(f"cell radius must lie in [0, 0.5), got {r}")
    if n < 32:
        raise ValueError(f"cell resolution must be >= 32, got {n}")
    c = cell_centers(n)
    yy1, yy2 = np.meshgrid(c, c, indexing="ij")
    in_y = np.hypot(yy1, yy2) >= r
    if r > 0.0:
        # a Y cell cut off from every neighbour would make the system singular
        while True:
            iso = in_y & ~(
                np.roll(in_y, 1, 0) | np.roll(in_y, -1, 0) | np.roll(in_y, 1, 1) | np.roll(in_y, -1, 1)
            )
            if not iso.any():
                break
            in_y &= ~iso

    matrix, b1, b2, idx, open_faces = _cell_system(in_y, n)
    M = np.zeros((2, n, n))
    stats = []
    for j, b in enumerate((b1, b2)):
        b = b - b.mean()
        x, st = cg_solve(SparseSystem(matrix, b), tol=tol)
        x -= x.mean()
        M[j][in_y] = x
        stats.append(st)
    fg = _face_gradients(M, in_y, open_faces, n)
    grad = np.zeros_like(fg)
    for d in (0, 1):
        # average of the faces on the +e_d and -e_d sides
        grad[:, d] = 0.5 * (fg[:, d] + np.roll(fg[:, d], 1, axis=1 + d))
    grad *= in_y
    logger.debug(
        "Cell r=%g n=%d: |Y|_h=%.6f, CG iterations %d/%d", r, n, in_y.mean(), stats[0].iterations, stats[1].iterations
    )
    return CellSolution(
        r=float(r), n=n, M=M, grad=grad, face_grad=fg, in_y=in_y, open_faces=open_faces, stats=(stats[0], stats[1])
    )


def cell_energy(sol: CellSolution, j: int, w: Array | None = None, D_h: float = 1.0) -> float:
    """D_h times the discrete integral over Y of |grad w + e_j|^2 (w defaults to M_j)."""
    field_ = sol.M[j] if w is None else np.asarray(w, dtype=float)
    n = sol.n
    total = 0.0
    for d in (0, 1):
        diff = (np.roll(field_, -1, axis=d) - field_) * n
        shift = 1.0 if d == j else 0.0
        total += float(np.sum(((diff + shift) ** 2)[sol.open_faces[d]]))
    return D_h * total / n**2


def effective_tensor(sol: CellSolution, D_h: float = 1.0) -> Array:
    """
    D_h times the integral over Y of (I + grad M), evaluated in the symmetric energy
    form sum over open faces of h^2 (e_k + grad M_k)_d (e_j + grad M_j)_d.
    """
    h2 = sol.h**2
    D = np.zeros((2, 2))
    for d in (0, 1):
        mask = sol.open_faces[d]
        flux = [(float(d == k) + sol.face_grad[k, d])[mask] for k in (0, 1)]
        for k in (0, 1):
            for j in (0, 1):
                D[k, j] += h2 * float(np.sum(flux[k] * flux[j]))
    D = 0.5 * (D + D.T)
    return D_h * D


def _periodic_bilinear(fields: Array, y: Array, n: int) -> Array:
    """Bilinear interpolation of (C, n, n) cell-centered periodic fields at points y (..., 2)."""
    s = (np.asarray(y, dtype=float) + 0.5) * n - 0.5
    f = np.floor(s)
    t = s - f
    i0 = f.astype(np.int64) % n
    i1 = (i0 + 1) % n
    a, b = t[..., 0], t[..., 1]
    out = (
        fields[:, i0[..., 0], i0[..., 1]] * (1 - a) * (1 - b)
        + fields[:, i1[..., 0], i0[..., 1]] * a * (1 - b)
        + fields[:, i0[..., 0], i1[..., 1]] * (1 - a) * b
        + fields[:, i1[..., 0], i1[..., 1]] * a * b
    )
    return np.moveaxis(out, 0, -1)


@dataclass(frozen=True, eq=False)
class EffectiveTable:
    """theta(r) and D(r) sampled at sorted radii; monotone cubic (PCHIP) in between."""

    radii: Array
    theta_samples: Array
    tensors: Array  # (K, 2, 2)
    n: int
    D_h: float
    solutions: tuple[CellSolution, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.radii.ndim != 1 or self.radii.size < 2:
            raise ValueError("table needs at least 2 radii")
        if np.any(np.diff(self.radii) <= 0.0):
            raise ValueError("table radii must be sorted and distinct")
        interp = PchipInterpolator(self.radii, self.tensors.reshape(-1, 4), axis=0, extrapolate=False)
        object.__setattr__(self, "_interp", interp)
        if self.solutions is not None:
            fields = np.stack([s.extended() for s in self.solutions])
            object.__setattr__(self, "_fields", fields)

    def _check(self, r: Array) -> Array:
        r = np.asarray(r, dtype=float)
        lo, hi = self.radii[0], self.radii[-1]
        if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
            raise ValueError(f"radius outside tabulated range [{lo}, {hi}]")
        return np.clip(r, lo, hi)

    def theta(self, r: Array) -> Array:
        r = self._check(r)
        return 1.0 - np.pi * r**2

    def tensor(self, r: Array) -> Array:
        """D(r) with shape (..., 2, 2)."""
        r = self._check(r)
        out = self._interp(r)  # type: ignore[attr-defined]
        return np.asarray(out).reshape(*np.shape(r), 2, 2)

    def d(self, r: Array) -> Array:
        """Normalized scalar d(r) = D11(r) / D_h."""
        return self.tensor(r)[..., 0, 0] / self.D_h

    @property
    def has_correctors(self) -> bool:
        return self.solutions is not None

    def corrector(self, r: Array, y: Array) -> Array:
        """
        M(r, y) with shape (..., 2): linear in r between stored solutions, bilinear
        (periodic) in y. Values inside B come from the nearest Y cell.
        """
        if self.solutions is None:
            raise ValueError("table was loaded without cell solutions; rebuild it to reconstruct correctors")
        r = self._check(r)
        y = np.asarray(y, dtype=float)
        k = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, self.radii.size - 2)
        lam = (r - self.radii[k]) / (self.radii[k + 1] - self.radii[k])
        fields = self._fields  # type: ignore[attr-defined]
        out = np.zeros((*np.shape(r), 2))
        for kk in np.unique(k):
            sel = k == kk
            lo = _periodic_bilinear(fields[kk], y[sel], self.n)
            hi = _periodic_bilinear(fields[kk + 1], y[sel], self.n)
            w = lam[sel][..., None]
            out[sel] = (1.0 - w) * lo + w * hi
        return out

    def violations(self) -> list[str]:
        """Broken table invariants (empty when the table is sound)."""
        out = []
        for r, D in zip(self.radii, self.tensors):
            if abs(D[0, 1] - D[1, 0]) > 1e-10 * self.D_h:
                out.append(f"r={r:g}: tensor not symmetric")
            eig = np.linalg.eigvalsh(0.5 * (D + D.T))
            if eig.min() <= 0.0 or eig.max() > self.D_h * (1.0 + 1e-9):
                out.append(f"r={r:g}: eigenvalues {eig} outside (0, D_h]")
        d = self.tensors[:, 0, 0]
        if np.any(np.diff(d) > 1e-12 * self.D_h):
            out.append("D11 is not decreasing in r")
        return out

    def rows(self) -> list[tuple[float, ...]]:
        return [
            (float(r), float(th), float(D[0, 0]), float(D[0, 1]), float(D[1, 0]), float(D[1, 1]))
            for r, th, D in zip(self.radii, self.theta_samples, self.tensors)
        ]


def build_table(
    radii: list[float], n: int, D_h: float = 1.0, threads: int | None = None
) -> EffectiveTable:
    """
    Solve the cell problem at every radius (concurrently) and tabulate theta and D.

    Raises:
        ValueError: fewer than 4 radii, unsorted or duplicate radii, radii outside [0, 1/2)
    """
    if len(radii) < 4:
        raise ValueError(f"table needs at least 4 radii, got {len(radii)}")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"table radii must be sorted and distinct, got {radii}")
    if radii[0] < 0.0 or radii[-1] >= 0.5:
        raise ValueError("table radii must lie in [0, 0.5)")
    workers = min(thread_cap(threads), len(radii))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        solutions = list(pool.map(lambda r: solve_cell(r, n, D_h), radii))
    tensors = np.stack([effective_tensor(s, D_h) for s in solutions])
    table = EffectiveTable(
        radii=np.asarray(radii, dtype=float),
        theta_samples=np.array([s.theta for s in solutions]),
        tensors=tensors,
        n=n,
        D_h=D_h,
        solutions=tuple(solutions),
    )
    for problem in table.violations():
        logger.warning("Effective table: %s", problem)
    logger.info("Built effective table: %d radii, n=%d", len(radii), n)
    return table


def write_table(table: EffectiveTable, path: Path, stamp: Stamp) -> Path:
    return write_csv(path, TABLE_COLUMNS, table.rows(), stamp=stamp, meta={"n": table.n, "D_h": table.D_h})


def read_table(path: Path) -> EffectiveTable:
    """Load a table written by write_table (without cell solutions)."""
    meta, columns, rows = read_csv(path)
    if tuple(columns) != TABLE_COLUMNS:
        raise ValueError(f"{path}: expected columns {','.join(TABLE_COLUMNS)}, got {','.join(columns)}")
    data = np.array([[float(v) for v in row] for row in rows])
    return EffectiveTable(
        radii=data[:, 0],
        theta_samples=data[:, 1],
        tensors=data[:, 2:].reshape(-1, 2, 2),
        n=int(meta.get("n", "0")),
        D_h=float(meta.get("D_h", "1")),
    )
