"""
Quadrature checks of the auxiliary estimates behind the corrector bound:

  - transport identity: moving-domain derivative of the cell flux equals the
    boundary term carried by the first-order normal correction
  - oscillating pairs: a compatible (Q, p) pair makes volume and surface
    integrals of rapidly oscillating functions agree up to O(eps)
  - boundary strips: integrals over the eps-strip along the outer boundary
    scale like eps^(3/2)
  - cutoff scaling of (1 - chi, grad chi, Laplacian chi)
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RectBivariateSpline

from homog_sim.cell import EffectiveTable, cell_centers
from homog_sim.correctors import rate_fit
from homog_sim.geometry import LevelSetSpec, build_cutoff, build_medium, cutoff_norms, interface_point, retained_cells
from homog_sim.presets import Array, Radius, SampleField

logger = logging.getLogger(__name__)

DEFAULT_POINTS = ((0.4, 0.3), (0.6, 0.7))
CUTOFF_EXPONENTS = (0.5, -0.5, -1.5)


class CellField(Protocol):
    """Cell correctors M(r, y) satisfying the Neumann condition on |y| = r."""

    def grad(self, r: Array, y: Array) -> Array:
        """(..., 2, 2) with [..., k, l] = d M_l / d y_k."""
        ...

    def grad_dr(self, r: Array, y: Array) -> Array:
        """d/dr of grad."""
        ...


@dataclass(frozen=True)
class DiluteCellField:
    """
    M_l(r, y) = r^2 y_l / |y|^2.

    Satisfies nu0 . (grad M_l + e_l) = 0 on |y| = r exactly, and the integral of
    grad_y M over U \\ B(r) vanishes, so the cell flux integral is theta(r) I.
    """

    def value(self, r: Array, y: Array) -> Array:
        y = np.asarray(y, dtype=float)
        r = np.asarray(r, dtype=float)
        return (r * r)[..., None] * y / np.sum(y * y, axis=-1, keepdims=True)

    def grad(self, r: Array, y: Array) -> Array:
        y = np.asarray(y, dtype=float)
        r2 = np.asarray(r, dtype=float) ** 2
        n2 = np.sum(y * y, axis=-1)
        eye = np.eye(2)
        g = eye / n2[..., None, None] - 2.0 * y[..., :, None] * y[..., None, :] / (n2**2)[..., None, None]
        return r2[..., None, None] * g

    def grad_dr(self, r: Array, y: Array) -> Array:
        r = np.asarray(r, dtype=float)
        return (2.0 / r)[..., None, None] * self.grad(r, y)


DILUTE = DiluteCellField()


SPLINE_PAD = 3


class TableCellField:
    """
    Correctors of a solved EffectiveTable: a periodic bicubic spline of each stored
    M_l (extended into B), linear in r between stored radii.

    The discrete correctors satisfy the Neumann condition only approximately, so
    check_transport_identity carries the normal-flux boundary term for this field.
    """

    def __init__(self, table: EffectiveTable):
        if table.solutions is None:
            raise ValueError("table was loaded without cell solutions; rebuild it to use its correctors")
        self.radii = table.radii
        c = cell_centers(table.n)
        p = SPLINE_PAD
        ext = np.concatenate([c[-p:] - 1.0, c, c[:p] + 1.0])
        self._splines = [
            [RectBivariateSpline(ext, ext, np.pad(M, p, mode="wrap"), kx=3, ky=3, s=0) for M in s.extended()]
            for s in table.solutions
        ]

    def _bracket(self, r: Array) -> tuple[Array, Array]:
        r = np.asarray(r, dtype=float)
        lo, hi = self.radii[0], self.radii[-1]
        if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
            raise ValueError(f"radius outside tabulated range [{lo}, {hi}]")
        k = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, self.radii.size - 2)
        lam = (np.clip(r, lo, hi) - self.radii[k]) / (self.radii[k + 1] - self.radii[k])
        return k, lam

    def _stored_grad(self, k: int, y: Array) -> Array:
        y = (y + 0.5) % 1.0 - 0.5
        g = np.empty((len(y), 2, 2))
        for j, spline in enumerate(self._splines[k]):
            g[:, 0, j] = spline.ev(y[:, 0], y[:, 1], dx=1)
            g[:, 1, j] = spline.ev(y[:, 0], y[:, 1], dy=1)
        return g

    def _blend(self, r: Array, y: Array, slope: bool) -> Array:
        k, lam = self._bracket(r)
        y = np.asarray(y, dtype=float)
        out = np.zeros((*np.shape(k), 2, 2))
        for kk in np.unique(k):
            sel = k == kk
            lo = self._stored_grad(int(kk), y[sel])
            hi = self._stored_grad(int(kk) + 1, y[sel])
            if slope:
                out[sel] = (hi - lo) / (self.radii[kk + 1] - self.radii[kk])
            else:
                w = lam[sel][:, None, None]
                out[sel] = (1.0 - w) * lo + w * hi
        return out

    def grad(self, r: Array, y: Array) -> Array:
        return self._blend(r, y, slope=False)

    def grad_dr(self, r: Array, y: Array) -> Array:
        return self._blend(r, y, slope=True)


def _octant_angles(n_phi: int, gauss: bool) -> tuple[Array, Array]:
    if n_phi % 8:
        raise ValueError(f"angular resolution must be a multiple of 8, got {n_phi}")
    per = n_phi // 8
    if gauss:
        t, w = leggauss(per)
        t, w = 0.5 * (t + 1.0), 0.5 * w
    else:
        t, w = (np.arange(per) + 0.5) / per, np.full(per, 1.0 / per)
    width = np.pi / 4.0
    phi = np.concatenate([width * (k + t) for k in range(8)])
    wphi = np.tile(w * width, 8)
    return phi, wphi


def _square_reach(phi: Array) -> Array:
    """Distance from the cell center to the boundary of U along angle phi."""
    return 0.5 / np.maximum(np.abs(np.cos(phi)), np.abs(np.sin(phi)))


def polar_cell_nodes(r: float, n_s: int, n_phi: int, rule: str = "gauss") -> tuple[Array, Array]:
    """
    Quadrature nodes and weights for U \\ B(r) in normalized polar coordinates
    rho = r + s (reach(phi) - r).

    rule: "gauss" (Gauss-Legendre in s and per octant in phi) or "left"
    (left-endpoint rectangle rule in s, midpoint per octant in phi; first order).
    """
    phi, wphi = _octant_angles(n_phi, gauss=rule == "gauss")
    if rule == "gauss":
        s, ws = leggauss(n_s)
        s, ws = 0.5 * (s + 1.0), 0.5 * ws
    elif rule == "left":
        s, ws = np.arange(n_s) / n_s, np.full(n_s, 1.0 / n_s)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    reach = _square_reach(phi)
    rho = r + s[None, :] * (reach - r)[:, None]
    e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    y = rho[..., None] * e[:, None, :]
    w = wphi[:, None] * ws[None, :] * rho * (reach - r)[:, None]
    return y.reshape(-1, 2), w.ravel()


def _flux(field_: CellField, r: float, y: Array, g: Array) -> Array:
    """F = (I + grad_y M) grad u0 at points y."""
    return g[None, :] + field_.grad(np.full(len(y), r), y) @ g


@dataclass(frozen=True)
class TransportIdentityResult:
    points: tuple[tuple[float, float], ...]
    lhs: Array
    rhs: Array
    neumann: Array  # int_dB (nu0 . F)(nu0 . grad r), zero when M meets the Neumann condition

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.lhs - self.rhs - self.neumann)))


def check_transport_identity(
    radius: Radius,
    u0: SampleField,
    field_: CellField = DILUTE,
    points: Sequence[tuple[float, float]] = DEFAULT_POINTS,
    n_s: int = 32,
    n_phi: int = 256,
    delta: float = 1e-4,
    require_varying: bool = True,
) -> TransportIdentityResult:
    """
    Compare int_Y div_x F dy - div_x int_Y F dy with -int_dB nu1 . F dsigma,
    F = (I + grad_y M) grad u0, at each point x. For a field that misses the Neumann
    condition the difference picks up int_dB (nu0 . F)(nu0 . grad r) dsigma, which is
    reported as `neumann` and left out of the residual.

    The volume integrals use the first-order rule of polar_cell_nodes; x-derivatives
    are central differences with step delta.

    Raises:
        ValueError: constant radius while require_varying is set
    """
    if require_varying and radius.is_constant:
        raise ValueError("the transport identity is trivial for a constant radius; use a varying one")
    lhs, rhs, neumann = [], [], []
    eye = np.eye(2)
    for p in points:
        x = np.asarray(p, dtype=float)
        r = float(radius(x))
        y, w = polar_cell_nodes(r, n_s, n_phi, rule="left")

        # int_Y div_x F dy at fixed nodes
        div_f = np.zeros(len(y))
        for k in (0, 1):
            xp, xm = x + delta * eye[k], x - delta * eye[k]
            fp = _flux(field_, float(radius(xp)), y, u0.gradient(xp))
            fm = _flux(field_, float(radius(xm)), y, u0.gradient(xm))
            div_f += (fp[:, k] - fm[:, k]) / (2.0 * delta)
        a = float(np.sum(w * div_f))

        # div_x of int_{Y(x)} F dy with nodes moving with r(x)
        def integral(xq: Array) -> Array:
            rq = float(radius(xq))
            yq, wq = polar_cell_nodes(rq, n_s, n_phi, rule="left")
            return np.sum(wq[:, None] * _flux(field_, rq, yq, u0.gradient(xq)), axis=0)

        div_g = sum(
            (integral(x + delta * eye[k])[k] - integral(x - delta * eye[k])[k]) / (2.0 * delta) for k in (0, 1)
        )
        lhs.append(a - float(div_g))

        # -int_dB nu1 . F, nu1 = -tau0 (tau0 . grad r), midpoint in angle
        nb = 4 * n_phi
        phi = 2.0 * np.pi * (np.arange(nb) + 0.5) / nb
        e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        tau = np.stack([-e[:, 1], e[:, 0]], axis=-1)
        yb = r * e
        fb = _flux(field_, r, yb, u0.gradient(x))
        grad_r = radius.gradient(x)
        nu1 = -tau * (tau @ grad_r)[:, None]
        ds = r * 2.0 * np.pi / nb
        rhs.append(-float(np.sum(np.sum(nu1 * fb, axis=-1))) * ds)
        neumann.append(float(np.sum(np.sum(e * fb, axis=-1) * (e @ grad_r))) * ds)
    return TransportIdentityResult(
        points=tuple(tuple(p) for p in points), lhs=np.array(lhs), rhs=np.array(rhs), neumann=np.array(neumann)
    )


@dataclass(frozen=True)
class RefinementStudy:
    levels: tuple[int, ...]
    residuals: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(a / b for a, b in zip(self.residuals, self.residuals[1:]))

    def failures(self, target: float = 2.0, tol: float = 0.2) -> list[str]:
        return [
            f"refinement {self.levels[i]} -> {self.levels[i + 1]}: residual ratio {q:.3f} not within {tol:.0%} of {target}"
            for i, q in enumerate(self.ratios)
            if abs(q - target) > tol * target
        ]

    def stalls(self) -> list[str]:
        """Refinements that fail to reduce the residual."""
        return [
            f"refinement {self.levels[i]} -> {self.levels[i + 1]}: residual {a:.3g} -> {b:.3g} does not decrease"
            for i, (a, b) in enumerate(zip(self.residuals, self.residuals[1:]))
            if not b < a
        ]


def transport_identity_study(
    radius: Radius,
    u0: SampleField,
    levels: Sequence[int] = (16, 32, 64, 128),
    field_: CellField = DILUTE,
    points: Sequence[tuple[float, float]] = DEFAULT_POINTS,
) -> RefinementStudy:
    residuals = tuple(
        check_transport_identity(radius, u0, field_, points, n_s=n).residual for n in levels
    )
    logger.info("Transport identity residuals %s", residuals)
    return RefinementStudy(levels=tuple(levels), residuals=residuals)


PairFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class OscillatingPair:
    """Volume density Q(x, y) on Y(x) and surface density p(x, y) on the inclusion boundary."""

    name: str
    Q: PairFn
    p: PairFn
    compatible: bool = True


def _theta(r: Array) -> Array:
    return 1.0 - np.pi * np.asarray(r) ** 2


def zero_pair() -> OscillatingPair:
    def zero(x: Array, y: Array) -> Array:
        return np.zeros(np.asarray(x).shape[:-1])

    return OscillatingPair("zero", zero, zero)


def unit_pair(radius: Radius) -> OscillatingPair:
    """Q = 1, p = theta / (2 pi r)."""

    def Q(x: Array, y: Array) -> Array:
        return np.ones(np.asarray(x).shape[:-1])

    def p(x: Array, y: Array) -> Array:
        r = radius(x)
        return _theta(r) / (2.0 * np.pi * r)

    return OscillatingPair("unit", Q, p)


def exchange_pair(radius: Radius, g: float = 1.0) -> OscillatingPair:
    """Flux pair of v0 = g |y|^2: p = 2 g r on the rim, Q = 4 pi g r^2 / theta."""

    def Q(x: Array, y: Array) -> Array:
        r = radius(x)
        return 4.0 * np.pi * g * r * r / _theta(r)

    def p(x: Array, y: Array) -> Array:
        return 2.0 * g * radius(x)

    return OscillatingPair("exchange", Q, p)


def transport_pair(radius: Radius, u0: SampleField, field_: DiluteCellField = DILUTE) -> OscillatingPair:
    """
    Q = div_x F - theta^-1 div_x int_Y F, p = -nu1 . F with F = (I + grad_y M) grad u0.
    Compatible by the transport identity; with the dilute field int_Y F = theta grad u0.
    """

    def Q(x: Array, y: Array) -> Array:
        r = radius(x)
        gr = radius.gradient(x)
        g = u0.gradient(x)
        hess = u0.hessian(x)
        G = field_.grad(r, y)
        Gr = field_.grad_dr(r, y)
        # div_x F = sum_kl dr(dM_l/dy_k) dr/dx_k du/dx_l + (delta_kl + dM_l/dy_k) d2u/dx_k dx_l
        div_f = np.einsum("...kl,...k,...l->...", Gr, gr, g) + np.einsum(
            "...kl,...kl->...", np.eye(2) + G, hess
        )
        lap = hess[..., 0, 0] + hess[..., 1, 1]
        return div_f - lap + (2.0 * np.pi * r / _theta(r)) * np.sum(gr * g, axis=-1)

    def p(x: Array, y: Array) -> Array:
        r = radius(x)
        y = np.asarray(y, dtype=float)
        nu0 = y / np.linalg.norm(y, axis=-1, keepdims=True)
        tau = np.stack([-nu0[..., 1], nu0[..., 0]], axis=-1)
        nu1 = -tau * np.sum(tau * radius.gradient(x), axis=-1, keepdims=True)
        F = u0.gradient(x) + np.einsum("...kl,...l->...k", field_.grad(r, y), u0.gradient(x))
        return -np.sum(nu1 * F, axis=-1)

    return OscillatingPair("transport", Q, p)


def incompatible_pair() -> OscillatingPair:
    """Q = 1, p = 0: violates the average condition on purpose."""

    def Q(x: Array, y: Array) -> Array:
        return np.ones(np.asarray(x).shape[:-1])

    def p(x: Array, y: Array) -> Array:
        return np.zeros(np.asarray(x).shape[:-1])

    return OscillatingPair("incompatible", Q, p, compatible=False)


def compatibility_gap(
    pair: OscillatingPair, radius: Radius, points: Sequence[tuple[float, float]], n: int = 32
) -> float:
    """max over x of |int_Y Q(x, .) - int_dB p(x, .)| in cell units."""
    gaps = []
    for pt in points:
        x = np.asarray(pt, dtype=float)
        r = float(radius(x))
        y, w = polar_cell_nodes(r, n, 8 * n, rule="gauss")
        xs = np.broadcast_to(x, y.shape)
        vol = float(np.sum(w * pair.Q(xs, y)))
        nb = 8 * n
        phi = 2.0 * np.pi * (np.arange(nb) + 0.5) / nb
        yb = r * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        surf = float(np.sum(pair.p(np.broadcast_to(x, yb.shape), yb))) * r * 2.0 * np.pi / nb
        gaps.append(abs(vol - surf) / max(1.0, abs(vol), abs(surf)))
    return max(gaps)


def _gauss_rect(a1: float, b1: float, a2: float, b2: float, n1: int, n2: int) -> tuple[Array, Array]:
    t1, w1 = leggauss(n1)
    t2, w2 = leggauss(n2)
    x1 = a1 + 0.5 * (t1 + 1.0) * (b1 - a1)
    x2 = a2 + 0.5 * (t2 + 1.0) * (b2 - a2)
    X = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1).reshape(-1, 2)
    W = np.outer(w1 * 0.5 * (b1 - a1), w2 * 0.5 * (b2 - a2)).ravel()
    return X, W


def h1_norm(phi: SampleField, omega: tuple[float, float, float, float], n: int = 64) -> float:
    X, W = _gauss_rect(*omega, n, n)
    return math.sqrt(float(np.sum(W * (phi(X) ** 2 + np.sum(phi.gradient(X) ** 2, axis=-1)))))


@dataclass(frozen=True)
class PairRow:
    eps: float
    volume: float
    surface: float
    ratio: float


@dataclass(frozen=True)
class PairReport:
    pair: str
    rows: tuple[PairRow, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(r.ratio for r in self.rows)

    @property
    def growth(self) -> tuple[float, ...]:
        """R(eps/2) / R(eps) along the ladder."""
        return tuple(b / a if a > 0 else math.inf for a, b in zip(self.ratios, self.ratios[1:]))

    def spread(self) -> float:
        pos = [r for r in self.ratios if r > 0]
        return max(pos) / min(pos) if pos else 1.0


def _cell_volume_nodes(spec: LevelSetSpec, epsilon: float, cells: Array, n_s: int, n_phi: int) -> tuple[Array, Array, Array]:
    """Polar Gauss nodes of every retained cell minus its inclusion; returns x, weights, cell index rows."""
    phi, wphi = _octant_angles(n_phi, gauss=True)
    s, ws = leggauss(n_s)
    s, ws = 0.5 * (s + 1.0), 0.5 * ws
    j = cells[:, None, :]
    xb, _ = interface_point(spec, epsilon, j, phi)  # (K, n_phi, 2)
    center = epsilon * cells[:, None, :].astype(float)
    rho_in = np.linalg.norm(xb - center, axis=-1)
    rho_out = epsilon * _square_reach(phi)[None, :]
    rho = rho_in[..., None] + s * (rho_out - rho_in)[..., None]  # (K, n_phi, n_s)
    e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    x = center[..., None, :] + rho[..., None] * e[None, :, None, :]
    w = wphi[None, :, None] * ws[None, None, :] * rho * (rho_out - rho_in)[..., None]
    rows = np.broadcast_to(np.arange(len(cells))[:, None, None], rho.shape)
    return x.reshape(-1, 2), w.ravel(), rows.ravel()


def _ring_nodes(spec: LevelSetSpec, epsilon: float, cells: Array, n: int) -> tuple[Array, Array, Array]:
    x0, x1, y0, y1 = spec.omega
    kept = {tuple(c) for c in cells.tolist()}
    xs, ws, js = [], [], []
    for j1 in range(math.floor(x0 / epsilon), math.ceil(x1 / epsilon) + 1):
        a1, b1 = max(x0, (j1 - 0.5) * epsilon), min(x1, (j1 + 0.5) * epsilon)
        if b1 <= a1:
            continue
        for j2 in range(math.floor(y0 / epsilon), math.ceil(y1 / epsilon) + 1):
            if (j1, j2) in kept:
                continue
            a2, b2 = max(y0, (j2 - 0.5) * epsilon), min(y1, (j2 + 0.5) * epsilon)
            if b2 <= a2:
                continue
            X, W = _gauss_rect(a1, b1, a2, b2, n, n)
            xs.append(X)
            ws.append(W)
            js.append(np.tile([j1, j2], (len(W), 1)))
    if not xs:
        return np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(js)


def check_oscillating_pair(
    pair: OscillatingPair,
    spec: LevelSetSpec,
    eps_list: Sequence[float],
    phi: SampleField,
    n_s: int = 8,
    n_phi: int = 48,
    n_gamma: int = 64,
    ring_points: int = 6,
    compat_tol: float = 1e-6,
) -> PairReport:
    """
    R(eps) = |int_{high phase} Q(x, x/eps) phi dx - eps int_{interface} p(x, x/eps) phi ds| / (eps ||phi||_H1).

    Raises:
        ValueError: the pair claims compatibility but violates the average condition
    """
    if pair.compatible:
        gap = compatibility_gap(pair, spec.radius, [(0.3, 0.3), (0.5, 0.5), (0.7, 0.4)])
        if gap > compat_tol:
            raise ValueError(f"pair {pair.name!r} violates the average condition (gap {gap:.3e})")
    norm = h1_norm(phi, spec.omega)
    rows = []
    for eps in eps_list:
        cells = retained_cells(spec, eps)
        vol = 0.0
        surf = 0.0
        if len(cells):
            x, w, idx = _cell_volume_nodes(spec, eps, cells, n_s, n_phi)
            y = x / eps - cells[idx]
            vol += float(np.sum(w * pair.Q(x, y) * phi(x)))
            ang = 2.0 * np.pi * (np.arange(n_gamma) + 0.5) / n_gamma
            xb, tb = interface_point(spec, eps, cells[:, None, :], ang)
            yb = xb / eps - cells[:, None, :]
            ds = np.linalg.norm(tb, axis=-1) * (2.0 * np.pi / n_gamma)
            surf = float(np.sum(pair.p(xb, yb) * phi(xb) * ds))
        xr, wr, jr = _ring_nodes(spec, eps, cells, ring_points)
        if len(wr):
            yr = xr / eps - jr
            inside = np.linalg.norm(yr, axis=-1) < spec.radius(xr)
            q = np.where(inside, 0.0, pair.Q(xr, np.where(inside[:, None], 0.5, yr)))
            vol += float(np.sum(wr * q * phi(xr)))
        ratio = abs(vol - eps * surf) / (eps * norm) if norm > 0 else 0.0
        rows.append(PairRow(eps=eps, volume=vol, surface=surf, ratio=ratio))
    logger.info("Pair %s: ratios %s", pair.name, [r.ratio for r in rows])
    return PairReport(pair=pair.name, rows=tuple(rows))


@dataclass(frozen=True)
class ScalingReport:
    """Per-eps values of one or more quantities and their fitted exponents."""

    names: tuple[str, ...]
    eps: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]  # one tuple per eps
    exponents: tuple[float, ...] = field(default=())

    def column(self, i: int) -> list[tuple[float, float]]:
        return [(e, v[i]) for e, v in zip(self.eps, self.values)]


def _fit_columns(names: Sequence[str], eps: Sequence[float], values: Sequence[Sequence[float]]) -> ScalingReport:
    exps = []
    for i in range(len(names)):
        try:
            exps.append(rate_fit([(e, v[i]) for e, v in zip(eps, values)])[0])
        except ValueError:
            exps.append(math.nan)
    return ScalingReport(
        names=tuple(names),
        eps=tuple(eps),
        values=tuple(tuple(v) for v in values),
        exponents=tuple(exps),
    )


def _rectangles(omega: tuple[float, float, float, float], w: float) -> list[tuple[float, float, float, float]]:
    x0, x1, y0, y1 = omega
    return [
        (x0, x1, y0, y0 + w),
        (x0, x1, y1 - w, y1),
        (x0, x0 + w, y0 + w, y1 - w),
        (x1 - w, x1, y0 + w, y1 - w),
    ]


def check_boundary_strip(
    u0: SampleField,
    phi: SampleField,
    eps_list: Sequence[float],
    omega: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    n_gauss: int = 16,
) -> ScalingReport:
    """
    |int over the strip dist(x, boundary) <= sqrt(2) eps / 2 of grad u0 phi dx| / ||phi||_H1
    per eps, with its fitted exponent.

    Raises:
        ValueError: phi does not vanish on the boundary
    """
    x0, x1, y0, y1 = omega
    t = np.linspace(0.0, 1.0, 101)
    edge = np.concatenate(
        [
            np.stack([x0 + t * (x1 - x0), np.full_like(t, y0)], axis=-1),
            np.stack([x0 + t * (x1 - x0), np.full_like(t, y1)], axis=-1),
            np.stack([np.full_like(t, x0), y0 + t * (y1 - y0)], axis=-1),
            np.stack([np.full_like(t, x1), y0 + t * (y1 - y0)], axis=-1),
        ]
    )
    if np.max(np.abs(phi(edge))) > 1e-12:
        raise ValueError("boundary strip check needs a test function vanishing on the boundary")
    norm = h1_norm(phi, omega)
    values = []
    for eps in eps_list:
        w = math.sqrt(2.0) * eps / 2.0
        total = np.zeros(2)
        for a1, b1, a2, b2 in _rectangles(omega, w):
            n1 = n_gauss * (4 if b1 - a1 > b2 - a2 else 1)
            n2 = n_gauss * (4 if b2 - a2 > b1 - a1 else 1)
            X, W = _gauss_rect(a1, b1, a2, b2, n1, n2)
            total += np.sum((W * phi(X))[:, None] * u0.gradient(X), axis=0)
        values.append((float(np.linalg.norm(total)) / norm if norm > 0 else 0.0,))
    return _fit_columns(("strip",), eps_list, values)


def check_cutoff_scaling(spec: LevelSetSpec, eps_list: Sequence[float], h_ratio: int) -> ScalingReport:
    """
    Norms of (1 - chi, grad chi, Laplacian chi) per eps and their fitted exponents.

    Raises:
        ValueError: h = eps / h_ratio under-resolves the inclusions (needs h_ratio >= 4 / r_min)
    """
    values = []
    for eps in eps_list:
        geom = build_medium(spec, eps, eps / h_ratio)
        values.append(cutoff_norms(geom, build_cutoff(geom)))
    return _fit_columns(("one_minus_chi", "grad_chi", "lap_chi"), eps_list, values)


def cutoff_failures(report: ScalingReport, tol: float = 0.15) -> list[str]:
    return [
        f"{name}: exponent {got:.3f} not within {tol} of {want}"
        for name, got, want in zip(report.names, report.exponents, CUTOFF_EXPONENTS)
        if not abs(got - want) <= tol
    ]
