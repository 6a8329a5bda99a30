"""
Macroscopic reconstructions of the two-scale solution on the eps-geometry, the
corrector norms between micro and reconstructed fields, and the eps ladder with
its power-law fits.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from homog_core import RunConfig, thread_cap
from scipy.integrate import trapezoid

from homog_sim.cell import EffectiveTable, build_table
from homog_sim.geometry import CutoffField, LevelSetSpec, MediumGeometry, build_cutoff, build_medium, cell_coordinates
from homog_sim.microsim import MicroConfig, MicroState, check_assumptions, run_micro
from homog_sim.presets import Array, Velocity
from homog_sim.twoscale import (
    MacroGrid,
    TwoScaleConfig,
    TwoScaleState,
    assemble_macro,
    build_macro_grid,
    initial_twoscale,
    interpolate_macro,
    run_twoscale,
    sample_v0,
)

logger = logging.getLogger(__name__)

NORM_COLUMNS = ("N1", "N2", "N3_Linf", "N3_L2", "N4_Linf", "N4_L2")
RATE_COLUMNS = ("eps", *NORM_COLUMNS)
CUTOFF_COLUMNS = ("eps", "N3_L2", "N3chi_L2")
ACCEPTANCE_ORDER = 0.4


@dataclass(frozen=True)
class Reconstruction:
    """Reconstructed fields on the fine grid at one time (NaN off their phase)."""

    t: float
    u0: Array  # u0(x) on high nodes
    v0: Array  # v0(x, x/eps) on low nodes
    u1: Array  # u0 + eps M(x, x/eps) . grad u0 on high nodes
    u1_chi: Array | None = None  # u0 + eps chi M . grad u0
    q0: Array | None = None  # theta^-1 qbar on high nodes, (..., 2)


def macro_gradient(grid: MacroGrid, u: Array) -> Array:
    """Second-order finite-difference gradient of a nodal macro field, shape (..., 2)."""
    g1, g2 = np.gradient(u, grid.xs, grid.ys, edge_order=2)
    return np.stack([g1, g2], axis=-1)


def reconstruct(
    state: TwoScaleState,
    grid: MacroGrid,
    table: EffectiveTable,
    geom: MediumGeometry,
    cutoff: CutoffField | None = None,
    velocity: Velocity | None = None,
) -> Reconstruction:
    """
    Sample one two-scale state on the eps-geometry.

    Raises:
        ValueError: the table holds no cell solutions or does not cover r(x)
    """
    if not table.has_correctors:
        raise ValueError("reconstruction needs a table built with its cell solutions")
    eps = geom.epsilon
    X = geom.grid.coords()
    _, Y = cell_coordinates(X, eps)
    high, low = geom.high, geom.low
    radius = geom.spec.radius

    u0 = interpolate_macro(grid, state.u, X)
    grad = macro_gradient(grid, state.u)
    grad_f = np.stack([interpolate_macro(grid, grad[..., d], X) for d in (0, 1)], axis=-1)

    r_high = radius(X[high])
    M = table.corrector(r_high, Y[high])
    corr = np.sum(M * grad_f[high], axis=-1)
    u1 = np.full(geom.grid.shape, np.nan)
    u1[high] = u0[high] + eps * corr
    u1_chi = None
    if cutoff is not None:
        u1_chi = np.full(geom.grid.shape, np.nan)
        u1_chi[high] = u0[high] + eps * cutoff.values[high] * corr

    v0 = np.full(geom.grid.shape, np.nan)
    if low.any():
        v0[low] = sample_v0(state, grid, radius, X[low], Y[low])
    q0 = None
    if velocity is not None:
        # the macro operator advects with qbar = theta q, so theta^-1 qbar is q itself
        q0 = np.where(high[..., None], velocity(X), np.nan)
    u0 = np.where(high, u0, np.nan)
    return Reconstruction(t=state.t, u0=u0, v0=v0, u1=u1, u1_chi=u1_chi, q0=q0)


def reconstruct_trajectory(
    states: Sequence[TwoScaleState],
    grid: MacroGrid,
    table: EffectiveTable,
    geom: MediumGeometry,
    cutoff: CutoffField | None = None,
    velocity: Velocity | None = None,
) -> list[Reconstruction]:
    return [reconstruct(s, grid, table, geom, cutoff, velocity) for s in states]


def initial_reconstruction(cfg: TwoScaleConfig, geom: MediumGeometry) -> Reconstruction:
    """
    u0I, v0I(x, x/eps) and theta^-1 qbar on the eps-geometry: the macro initial data
    the micro data are audited against by check_assumptions.
    """
    op = assemble_macro(cfg)
    return reconstruct(initial_twoscale(op, cfg), op.grid, cfg.table, geom, velocity=cfg.velocity)


def phase_l2(geom: MediumGeometry, err: Array, mask: np.ndarray) -> float:
    """Discrete L2 norm over the nodes of one phase (control-volume weights)."""
    e = np.where(mask, err, 0.0)
    return float(np.sqrt(np.sum(geom.grid.weights() * e * e)))


def phase_h1_seminorm(geom: MediumGeometry, err: Array, mask: np.ndarray) -> float:
    """Discrete |grad e|_L2 from edge differences with both endpoints in the phase; edges on the boundary count half."""
    e = np.where(mask, err, 0.0)
    total = 0.0
    # edges along x1 at fixed x2 index k; k = 0 and k = ny lie on the boundary
    dx = (e[1:, :] - e[:-1, :]) ** 2 * (mask[1:, :] & mask[:-1, :])
    wx = np.ones(dx.shape[1])
    wx[[0, -1]] = 0.5
    total += float(np.sum(dx * wx[None, :]))
    dy = (e[:, 1:] - e[:, :-1]) ** 2 * (mask[:, 1:] & mask[:, :-1])
    wy = np.ones(dy.shape[0])
    wy[[0, -1]] = 0.5
    total += float(np.sum(dy * wy[:, None]))
    return math.sqrt(total)


def phase_h1(geom: MediumGeometry, err: Array, mask: np.ndarray) -> float:
    return math.hypot(phase_l2(geom, err, mask), phase_h1_seminorm(geom, err, mask))


def time_norms(times: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """(max over stored times, trapezoid L2 in time)."""
    v = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    linf = float(v.max()) if v.size else 0.0
    if v.size < 2:
        return linf, 0.0
    return linf, float(np.sqrt(trapezoid(v * v, t)))


@dataclass(frozen=True)
class RateRow:
    eps: float
    N1: float
    N2: float
    N3_Linf: float
    N3_L2: float
    N4_Linf: float
    N4_L2: float
    N3chi_L2: float | None = None

    def norms(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in NORM_COLUMNS)

    def as_row(self) -> tuple[float, ...]:
        return (self.eps, *self.norms())


def corrector_norms(
    micro: Sequence[MicroState], recon: Sequence[Reconstruction], geom: MediumGeometry
) -> RateRow:
    """
    The four corrector norms over the stored times.

    Raises:
        ValueError: the two trajectories are stored at different times
    """
    if len(micro) != len(recon) or any(abs(a.t - b.t) > 1e-12 for a, b in zip(micro, recon)):
        raise ValueError(
            f"time grids differ: micro {[s.t for s in micro]} vs reconstruction {[r.t for r in recon]}"
        )
    high, low = geom.high, geom.low
    eps = geom.epsilon
    n1, n2, n3, n4, n3chi = [], [], [], [], []
    for s, r in zip(micro, recon):
        n1.append(phase_l2(geom, s.values - r.u0, high))
        n2.append(phase_l2(geom, s.values - r.v0, low) if low.any() else 0.0)
        n3.append(phase_h1(geom, s.values - r.u1, high))
        n4.append(eps * phase_h1(geom, s.values - r.v0, low) if low.any() else 0.0)
        if r.u1_chi is not None:
            n3chi.append(phase_h1(geom, s.values - r.u1_chi, high))
    times = [s.t for s in micro]
    n3_inf, n3_l2 = time_norms(times, n3)
    n4_inf, n4_l2 = time_norms(times, n4)
    chi = time_norms(times, n3chi)[1] if n3chi else None
    return RateRow(
        eps=eps,
        N1=max(n1),
        N2=max(n2),
        N3_Linf=n3_inf,
        N3_L2=n3_l2,
        N4_Linf=n4_inf,
        N4_L2=n4_l2,
        N3chi_L2=chi,
    )


def rate_fit(rows: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """
    Least-squares fit of log norm = log c + p log eps.

    Returns:
        (p, c)

    Raises:
        ValueError: fewer than 3 rows or a nonpositive value
    """
    if len(rows) < 3:
        raise ValueError(f"rate fit needs at least 3 rows, got {len(rows)}")
    eps = np.array([r[0] for r in rows], dtype=float)
    val = np.array([r[1] for r in rows], dtype=float)
    if np.any(eps <= 0.0) or np.any(val <= 0.0):
        raise ValueError("rate fit needs positive eps and norms")
    p, logc = np.polyfit(np.log(eps), np.log(val), 1)
    return float(p), float(math.exp(logc))


class LadderError(RuntimeError):
    """One or more ladder rows failed; `failures` maps eps to the error."""

    def __init__(self, failures: dict[float, BaseException]):
        self.failures = failures
        lines = [f"eps={eps:g}: {type(e).__name__}: {e}" for eps, e in sorted(failures.items(), reverse=True)]
        super().__init__("ladder failed:\n" + "\n".join(lines))


@dataclass
class RateReport:
    rows: list[RateRow]
    floor: list[RateRow] = field(default_factory=list)
    fits: dict[str, tuple[float, float]] = field(default_factory=dict)
    meta: dict[str, float | int] = field(default_factory=dict)

    def __post_init__(self):
        self.rows.sort(key=lambda r: r.eps, reverse=True)
        self.floor.sort(key=lambda r: r.eps, reverse=True)

    def fit(self) -> dict[str, tuple[float, float]]:
        """Fit every norm after subtracting the floor (NaN where a difference is not positive)."""
        floors = {r.eps: r for r in self.floor}
        self.fits = {}
        for col in NORM_COLUMNS:
            pts = []
            for row in self.rows:
                val = getattr(row, col)
                base = floors.get(row.eps)
                if base is not None:
                    val -= getattr(base, col)
                pts.append((row.eps, val))
            try:
                self.fits[col] = rate_fit(pts)
            except ValueError as e:
                logger.warning("No rate for %s: %s", col, e)
                self.fits[col] = (math.nan, math.nan)
        return self.fits

    def failures(self, order: float = ACCEPTANCE_ORDER) -> list[str]:
        """Acceptance: every norm sequence strictly decreasing, N3_L2 order >= `order`."""
        out = []
        for col in ("N1", "N2", "N3_L2", "N4_L2"):
            seq = [getattr(r, col) for r in self.rows]
            if any(b >= a for a, b in zip(seq, seq[1:])):
                out.append(f"{col} is not strictly decreasing in eps: {seq}")
        p = self.fits.get("N3_L2", (math.nan, math.nan))[0]
        if not (p >= order):
            out.append(f"N3_L2 order {p:.3f} < {order}")
        return out

    def summary_lines(self) -> list[str]:
        lines = []
        for col in NORM_COLUMNS:
            p, c = self.fits.get(col, (math.nan, math.nan))
            lines.append(f"fit {col}: p={p:.6g} c={c:.6g}")
        return lines


def floor_config(cfg: RunConfig) -> RunConfig:
    """The same run without inclusions; its norms are the discretization floor."""
    data = cfg.model_dump()
    data["geometry"]["radius"] = {"kind": "constant", "r0": 0.0}
    data["geometry"]["r_min"] = None
    data["geometry"]["r_max"] = None
    data["discretization"]["radii"] = None
    return RunConfig.model_validate(data)


def ladder_row(cfg: RunConfig, table: EffectiveTable, epsilon: float) -> RateRow:
    """Micro run, two-scale run and norms for one eps."""
    spec = LevelSetSpec.from_config(cfg)
    geom = build_medium(spec, epsilon, cfg.h_for(epsilon))
    cutoff = build_cutoff(geom)
    mcfg = MicroConfig.from_config(cfg, epsilon)
    micro = run_micro(geom, mcfg)
    ts_cfg = TwoScaleConfig.from_config(cfg, table, epsilon)
    states = run_twoscale(ts_cfg)
    grid = build_macro_grid(ts_cfg)
    recon = reconstruct_trajectory(states, grid, table, geom, cutoff, ts_cfg.velocity)
    for problem in check_assumptions(geom, mcfg, recon[0]).violations():
        logger.warning("Ladder row eps=%g: data restriction: %s", epsilon, problem)
    row = corrector_norms(micro, recon, geom)
    logger.info("Ladder row eps=%g: %s", epsilon, dict(zip(NORM_COLUMNS, row.norms())))
    return row


def _run_rows(cfg: RunConfig, table: EffectiveTable, eps: Sequence[float], workers: int) -> list[RateRow]:
    failures: dict[float, BaseException] = {}
    rows: list[RateRow] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(e, pool.submit(ladder_row, cfg, table, e)) for e in eps]
        for e, fut in futures:
            try:
                rows.append(fut.result())
            except Exception as exc:  # noqa: BLE001 - collected per eps
                failures[e] = exc
    if failures:
        raise LadderError(failures)
    return rows


def run_ladder(cfg: RunConfig, with_floor: bool = True) -> RateReport:
    """
    Run every eps of cfg.run.eps (h = eps / h_ratio, dt = h unless configured; H, m fixed)
    concurrently, plus the inclusion-free floor ladder, and fit the rates.

    Raises:
        LadderError: aggregated per-eps failures
    """
    eps = sorted(cfg.run.eps, reverse=True)
    workers = min(thread_cap(cfg.run.threads), len(eps))
    table = build_table(cfg.table_radii(), cfg.discretization.n, cfg.physics.D_h, threads=cfg.run.threads)
    rows = _run_rows(cfg, table, eps, workers)
    floor: list[RateRow] = []
    if with_floor:
        fcfg = floor_config(cfg)
        ftable = build_table(fcfg.table_radii(), fcfg.discretization.n, fcfg.physics.D_h, threads=cfg.run.threads)
        floor = _run_rows(fcfg, ftable, eps, workers)
    report = RateReport(
        rows=rows,
        floor=floor,
        meta={
            "h_ratio": cfg.discretization.h_ratio,
            "H": cfg.discretization.H,
            "m": cfg.discretization.m,
            "T": cfg.discretization.T,
            "n": cfg.discretization.n,
        },
    )
    report.fit()
    return report
