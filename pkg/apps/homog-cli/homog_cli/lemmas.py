"""Quadrature checks of the auxiliary estimates (homog lemmas).

Usage:
  homog lemmas [--only transport,pairs,strip,cutoff] [--eps 1/8,1/16,1/32,1/64] [--out DIR] [--strict]

Writes transport_identity.csv, oscillating_pairs.csv, boundary_strip.csv and cutoff_scaling.csv.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import typer
from homog_core import RunConfig, Stamp, append_block, echo_config, output_lock, write_csv
from homog_sim import LevelSetSpec, Radius, SampleField, build_table
from homog_sim.lemmas import (
    CUTOFF_EXPONENTS,
    TableCellField,
    check_boundary_strip,
    check_cutoff_scaling,
    check_oscillating_pair,
    cutoff_failures,
    exchange_pair,
    incompatible_pair,
    transport_identity_study,
    transport_pair,
    unit_pair,
)
from rich.table import Table

from homog_cli.cli import (
    EXIT_CONFIG,
    ConfigOption,
    DebugOption,
    OutOption,
    StrictOption,
    console,
    float_list,
    finish,
    fmt,
    load_config,
    out_dir_for,
    radius_override,
    set_debug,
    stamp_for,
)

lemmas_app = typer.Typer(help="Quadrature checks of the auxiliary estimates behind the corrector bound")

CHECKS = ("transport", "pairs", "strip", "cutoff")
LADDER = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
STRIP_EXPONENT = 1.35
PAIR_SPREAD = 2.0
INCOMPATIBLE_GROWTH = 1.6
TRANSPORT_RADII = (0.15, 0.2, 0.25, 0.3)
TRANSPORT_TABLE_LEVELS = (32, 64, 128)


def _selected(only: str | None) -> list[str]:
    if only is None:
        return list(CHECKS)
    picked = [c.strip() for c in only.split(",") if c.strip()]
    unknown = [c for c in picked if c not in CHECKS]
    if unknown:
        console.print(f"[red]Unknown check(s):[/red] {', '.join(unknown)} (choose from {', '.join(CHECKS)})")
        raise typer.Exit(EXIT_CONFIG)
    return picked


def _run_transport(cfg: RunConfig, out_dir: Path, stamp: Stamp, problems: list[str]) -> None:
    radius, u0 = Radius.linear(0.2, 0.05), SampleField("sincos")
    dilute = transport_identity_study(radius, u0)
    table = build_table(list(TRANSPORT_RADII), cfg.discretization.n, cfg.physics.D_h, threads=cfg.run.threads)
    solved = transport_identity_study(radius, u0, TRANSPORT_TABLE_LEVELS, field_=TableCellField(table))
    rows: list[tuple[Any, ...]] = []
    for name, study in (("dilute", dilute), ("table", solved)):
        ratios = (float("nan"), *study.ratios)
        rows.extend((name, n, res, q) for n, res, q in zip(study.levels, study.residuals, ratios))
    path = write_csv(
        out_dir / "transport_identity.csv",
        ("field", "n_s", "residual", "ratio"),
        rows,
        stamp=stamp,
        meta={"radius": "linear:r0=0.2,a=0.05", "u0": "sincos", "table_n": table.n},
    )
    t = Table(title="Transport identity", show_header=True, header_style="bold")
    t.add_column("field")
    for col in ("n_s", "residual", "ratio"):
        t.add_column(col, justify="right")
    for name, n, res, q in rows:
        t.add_row(name, str(n), fmt(res), fmt(q))
    console.print(t)
    console.print(f"  wrote {path}")
    problems.extend(dilute.failures())
    problems.extend(f"table field: {p}" for p in solved.stalls())


def _run_pairs(spec: LevelSetSpec, eps: list[float], u0: SampleField, out_dir: Path, stamp: Stamp, problems: list[str]) -> None:
    phi = SampleField("bump")
    pairs = [unit_pair(spec.radius), exchange_pair(spec.radius), transport_pair(spec.radius, u0), incompatible_pair()]
    rows: list[tuple[Any, ...]] = []
    t = Table(title="Oscillating pairs R(eps)", show_header=True, header_style="bold")
    t.add_column("pair")
    for e in eps:
        t.add_column(f"eps={e:g}", justify="right")
    for pair in pairs:
        report = check_oscillating_pair(pair, spec, eps, phi)
        rows.extend((pair.name, r.eps, r.volume, r.surface, r.ratio) for r in report.rows)
        t.add_row(pair.name, *(fmt(r) for r in report.ratios))
        if pair.compatible and report.spread() > PAIR_SPREAD:
            problems.append(f"pair {pair.name}: R varies by x{report.spread():.3g} across the ladder")
        if not pair.compatible and any(g < INCOMPATIBLE_GROWTH for g in report.growth):
            problems.append(f"pair {pair.name}: growth {[round(g, 3) for g in report.growth]} below x{INCOMPATIBLE_GROWTH}")
    path = write_csv(
        out_dir / "oscillating_pairs.csv", ("pair", "eps", "volume", "surface", "ratio"), rows, stamp=stamp
    )
    console.print(t)
    console.print(f"  wrote {path}")


def _run_strip(eps: list[float], out_dir: Path, stamp: Stamp, problems: list[str]) -> None:
    report = check_boundary_strip(SampleField("square"), SampleField("sinsin"), eps)
    path = write_csv(
        out_dir / "boundary_strip.csv",
        ("eps", "ratio"),
        report.column(0),
        stamp=stamp,
        meta={"u0": "square", "phi": "sinsin"},
    )
    p = report.exponents[0]
    append_block(path, [f"fit strip: p={p:.17g}"])
    console.print(f"Boundary strip: fitted exponent {fmt(p)} (need >= {STRIP_EXPONENT})")
    console.print(f"  wrote {path}")
    if not p >= STRIP_EXPONENT:
        problems.append(f"boundary strip exponent {p:.3f} < {STRIP_EXPONENT}")


def _run_cutoff(spec: LevelSetSpec, eps: list[float], h_ratio: int, out_dir: Path, stamp: Stamp, problems: list[str]) -> None:
    report = check_cutoff_scaling(spec, eps, h_ratio)
    path = write_csv(
        out_dir / "cutoff_scaling.csv",
        ("eps", *report.names),
        [(e, *v) for e, v in zip(report.eps, report.values)],
        stamp=stamp,
        meta={"h_ratio": h_ratio},
    )
    append_block(
        path, [f"fit {name}: p={p:.17g} expected={want:g}" for name, p, want in zip(report.names, report.exponents, CUTOFF_EXPONENTS)]
    )
    t = Table(title="Cutoff scaling", show_header=True, header_style="bold")
    for col in ("norm", "exponent", "expected"):
        t.add_column(col, justify="right")
    for name, p, want in zip(report.names, report.exponents, CUTOFF_EXPONENTS):
        t.add_row(name, fmt(p), fmt(want))
    console.print(t)
    console.print(f"  wrote {path}")
    problems.extend(cutoff_failures(report))


@lemmas_app.callback(invoke_without_command=True)
def lemmas(
    _ctx: typer.Context,
    config: Path | None = ConfigOption,
    out: Path | None = OutOption,
    only: str | None = typer.Option(None, "--only", help="Comma list of transport,pairs,strip,cutoff"),
    eps: str | None = typer.Option(None, "--eps", help="Scale ladder (default 1/8,1/16,1/32,1/64)"),
    radius_spec: str | None = typer.Option(None, "--radius-spec", help="Geometry for the pair and cutoff checks"),
    cutoff_h_ratio: int = typer.Option(
        16, "--cutoff-h-ratio", min=2, help="Grid points per cell for the cutoff norms (must resolve eps*r_min >= 4h)"
    ),
    strict: bool | None = StrictOption,
    debug: bool = DebugOption,
) -> None:
    """Run the quadrature checks and write one CSV report per check."""
    set_debug(debug)
    checks = _selected(only)
    ladder = float_list(eps)
    overrides: dict[str, Any] = {
        "run.eps": ladder if ladder is not None or config is not None else LADDER,
        "geometry.radius": radius_override(radius_spec),
        "run.strict": strict,
    }
    cfg = load_config("lemmas", config, overrides)
    out_dir = out_dir_for(cfg, out)
    stamp = stamp_for(cfg)
    scales = sorted(cfg.run.eps, reverse=True)
    problems: list[str] = []
    try:
        spec = LevelSetSpec.from_config(cfg)
        with output_lock(out_dir):
            echo_config(cfg, out_dir)
            console.rule("[bold cyan]Auxiliary estimates[/bold cyan]")
            if "transport" in checks:
                _run_transport(cfg, out_dir, stamp, problems)
            if "pairs" in checks:
                _run_pairs(spec, scales, SampleField("sincos"), out_dir, stamp, problems)
            if "strip" in checks:
                _run_strip(scales, out_dir, stamp, problems)
            if "cutoff" in checks:
                _run_cutoff(spec, scales, cutoff_h_ratio, out_dir, stamp, problems)
    except (RuntimeError, ValueError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e
    finish(problems, cfg.run.strict)
