"""homog CLI commands."""

import logging
from pathlib import Path
from typing import Any

import dotenv
import numpy as np
import typer
from homog_core import (
    ConfigError,
    RunConfig,
    Stamp,
    append_block,
    config_digest,
    echo_config,
    output_lock,
    parse_config,
    write_csv,
)
from homog_sim import (
    LevelSetSpec,
    MicroConfig,
    SolverError,
    TwoScaleConfig,
    build_cutoff,
    build_macro_grid,
    build_medium,
    build_table,
    check_assumptions,
    dump_geometry,
    energy_history,
    initial_reconstruction,
    mass_balance,
    parse_radius,
    parse_velocity,
    phase_components,
    read_table,
    run_ladder,
    run_micro,
    run_twoscale,
    write_table,
)
from homog_sim.correctors import CUTOFF_COLUMNS, NORM_COLUMNS, RATE_COLUMNS, LadderError
from homog_sim.twoscale import assemble_macro, initial_twoscale, step_twoscale
from rich.console import Console
from rich.table import Table

from homog_cli import __version__

dotenv.load_dotenv()

# Initialize
app = typer.Typer(help="homog - homogenization of locally periodic perforated media")
# Subcommands (lemmas) get added at bottom to avoid circular imports.
console = Console()

# Configure logging (default to WARNING, can be lowered to INFO in debug mode)
logging.basicConfig(
    level=logging.WARNING,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    datefmt="%Y-%m-%d %H:%M",
)
logger = logging.getLogger(__name__)

# exit codes
EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3

ConfigOption = typer.Option(None, "--config", "-c", help="YAML config file (sections geometry/physics/discretization/run)")
OutOption = typer.Option(None, "--out", "-o", help="Output directory (overrides run.out)")
StrictOption = typer.Option(None, "--strict/--no-strict", help="Exit 3 when an acceptance check fails")
DebugOption = typer.Option(False, "--debug", help="Log solver progress")


def set_debug(debug: bool) -> None:
    level = logging.INFO if debug else logging.WARNING
    logging.getLogger().setLevel(level)
    logging.getLogger("homog_sim").setLevel(level)


def load_config(command: str, config: Path | None, overrides: dict[str, Any]) -> RunConfig:
    """Parse and validate, printing every violation and exiting 2 on failure."""
    try:
        return parse_config(config, overrides, command=command)
    except ConfigError as e:
        console.print(f"[red]Invalid configuration ({len(e.violations)} problem(s)):[/red]")
        for v in e.violations:
            console.print(f"  [X] {v}")
        raise typer.Exit(EXIT_CONFIG) from e


def radius_override(text: str | None) -> dict[str, Any] | None:
    if text is None:
        return None
    try:
        return parse_radius(text).model_dump()
    except ValueError as e:
        console.print(f"[red]Invalid --radius-spec:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e


def velocity_override(text: str | None) -> dict[str, Any] | None:
    if text is None:
        return None
    try:
        return parse_velocity(text).model_dump()
    except ValueError as e:
        console.print(f"[red]Invalid --velocity:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e


def h_ratio_for(epsilon: float, h: float) -> int:
    """Grid cells per eps for an explicit spacing h; eps / h must be an integer."""
    ratio = epsilon / h if h > 0.0 else 0.0
    if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
        console.print(f"[red]Invalid --h:[/red] eps / h = {ratio:g} must be a positive integer (eps={epsilon:g})")
        raise typer.Exit(EXIT_CONFIG)
    return round(ratio)


def float_list(text: str | None) -> list[float] | None:
    """Comma list of numbers; fractions such as `1/8` are accepted."""
    if text is None:
        return None
    out = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        num, sep, den = item.partition("/")
        try:
            out.append(float(num) / float(den) if sep else float(num))
        except (ValueError, ZeroDivisionError) as e:
            console.print(f"[red]Invalid number {item!r}[/red]")
            raise typer.Exit(EXIT_CONFIG) from e
    return out


def stamp_for(cfg: RunConfig) -> Stamp:
    return Stamp(version=__version__, digest=config_digest(cfg))


def out_dir_for(cfg: RunConfig, out: Path | None) -> Path:
    return (out if out is not None else Path(cfg.run.out)).expanduser()


def verdict(ok: bool) -> str:
    return "[green][OK][/green]" if ok else "[red][FAIL][/red]"


def finish(problems: list[str], strict: bool) -> None:
    """Print acceptance problems; exit 3 under --strict."""
    if not problems:
        console.print("[green][OK] All checks passed[/green]")
        return
    console.print("[yellow]Acceptance checks failed:[/yellow]")
    for p in problems:
        console.print(f"  [!] {p}")
    if strict:
        raise typer.Exit(EXIT_ACCEPTANCE)


def fmt(v: float) -> str:
    return f"{v:.6g}"


@app.command()
def check(config: Path = typer.Argument(..., help="Config file to validate")):
    """Validate a config file and list every violation with its line number."""
    cfg = load_config("check", config, {})
    console.print(f"[green][OK][/green] {config} is valid (config={config_digest(cfg)[:12]})")


@app.command()
def cell(
    config: Path | None = ConfigOption,
    out: Path | None = OutOption,
    n: int | None = typer.Option(None, "--n", help="Cell grid resolution"),
    radii: str | None = typer.Option(None, "--radii", help="Comma list of table radii"),
    D_h: float | None = typer.Option(None, "--D-h", help="High-phase diffusivity"),
    threads: int | None = typer.Option(None, "--threads", help="Worker cap (HOMOG_THREADS wins)"),
    strict: bool | None = StrictOption,
    debug: bool = DebugOption,
):
    """Solve the cell problem over a set of radii and write the effective table (table.csv)."""
    set_debug(debug)
    overrides: dict[str, Any] = {
        "discretization.n": n,
        "discretization.radii": float_list(radii),
        "physics.D_h": D_h,
        "run.threads": threads,
        "run.strict": strict,
    }
    cfg = load_config("cell", config, overrides)
    out_dir = out_dir_for(cfg, out)
    try:
        with output_lock(out_dir):
            table = build_table(cfg.table_radii(), cfg.discretization.n, cfg.physics.D_h, threads=cfg.run.threads)
            echo_config(cfg, out_dir)
            path = write_table(table, out_dir / "table.csv", stamp_for(cfg))
    except SolverError as e:
        console.print(f"[red]Cell solve failed:[/red] {e}")
        raise typer.Exit(EXIT_SOLVER) from e
    except (RuntimeError, ValueError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e

    console.rule("[bold cyan]Effective table[/bold cyan]")
    t = Table(show_header=True, header_style="bold")
    for col in ("r", "theta", "D11", "D12", "D22", "d(r)"):
        t.add_column(col, justify="right")
    for r, th, d11, d12, _d21, d22 in table.rows():
        t.add_row(fmt(r), fmt(th), fmt(d11), fmt(d12), fmt(d22), fmt(d11 / table.D_h))
    console.print(t)
    max_off = float(np.max(np.abs(table.tensors[:, 0, 1])))
    console.print(f"Isotropy: max |D12| = {max_off:.3e} (D_h={table.D_h:g})")
    console.print(f"[green][OK][/green] Wrote {path}")
    finish(table.violations(), cfg.run.strict)


@app.command()
def micro(
    config: Path | None = ConfigOption,
    out: Path | None = OutOption,
    epsilon: float | None = typer.Option(None, "--epsilon", "-e", help="Scale of the microstructure"),
    radius_spec: str | None = typer.Option(None, "--radius-spec", help="e.g. constant:r0=0.25 or linear:r0=0.2,a=0.05"),
    T: float | None = typer.Option(None, "--T", help="Time horizon"),
    dt: float | None = typer.Option(None, "--dt", help="Time step (default h)"),
    h: float | None = typer.Option(None, "--h", help="Fine grid spacing (eps / h must be an integer)"),
    h_ratio: int | None = typer.Option(None, "--h-ratio", help="Fine grid spacing h = eps / h_ratio"),
    velocity: str | None = typer.Option(None, "--velocity", help="none or stream:amplitude=A"),
    all_times: bool = typer.Option(False, "--all-times", help="Write every stored time, not just T"),
    dump_geometry_: bool = typer.Option(False, "--dump-geometry", help="Also write geometry.csv (x,y,phase,chi)"),
    strict: bool | None = StrictOption,
    debug: bool = DebugOption,
):
    """Simulate the fine-scale problem on the perforated medium (micro.csv)."""
    set_debug(debug)
    overrides: dict[str, Any] = {
        "run.epsilon": epsilon,
        "geometry.radius": radius_override(radius_spec),
        "discretization.T": T,
        "discretization.dt": dt,
        "discretization.h_ratio": h_ratio,
        "physics.velocity": velocity_override(velocity),
        "run.strict": strict,
    }
    cfg = load_config("micro", config, overrides)
    if h is not None:
        overrides["discretization.h_ratio"] = h_ratio_for(cfg.run.epsilon, h)
        cfg = load_config("micro", config, overrides)
    eps = cfg.run.epsilon
    out_dir = out_dir_for(cfg, out)
    stamp = stamp_for(cfg)
    try:
        spec = LevelSetSpec.from_config(cfg)
        geom = build_medium(spec, eps, cfg.h_for(eps))
        mcfg = MicroConfig.from_config(cfg, eps)
        table = build_table(cfg.table_radii(), cfg.discretization.n, cfg.physics.D_h, threads=cfg.run.threads)
        initial = initial_reconstruction(TwoScaleConfig.from_config(cfg, table, eps), geom)
        audit = check_assumptions(geom, mcfg, initial)
        if audit.violations():
            raise ConfigError([f"data restriction: {v}" for v in audit.violations()])
        with output_lock(out_dir):
            trajectory = run_micro(geom, mcfg)
            echo_config(cfg, out_dir)
            X = geom.grid.coords().reshape(-1, 2)
            phase = geom.phase_mask().ravel()
            states = trajectory if all_times else trajectory[-1:]
            columns = ("t", "x", "y", "value", "phase") if all_times else ("x", "y", "value", "phase")
            rows = []
            for s in states:
                for p, val, ph in zip(X, s.values.ravel(), phase):
                    row = (float(p[0]), float(p[1]), float(val), str(ph))
                    rows.append((s.t, *row) if all_times else row)
            meta = {"epsilon": eps, "h": geom.grid.h, "T": mcfg.T, "dt": mcfg.dt}
            path = write_csv(out_dir / "micro.csv", columns, rows, stamp=stamp, meta=meta)
            if dump_geometry_:
                write_csv(
                    out_dir / "geometry.csv",
                    ("x", "y", "phase", "chi"),
                    dump_geometry(geom, build_cutoff(geom)),
                    stamp=stamp,
                    meta={"epsilon": eps, "h": geom.grid.h},
                )
    except ConfigError as e:
        console.print("[red]Invalid configuration:[/red]")
        for v in e.violations:
            console.print(f"  [X] {v}")
        raise typer.Exit(EXIT_CONFIG) from e
    except SolverError as e:
        console.print(f"[red]Micro solve failed:[/red] {e}")
        raise typer.Exit(EXIT_SOLVER) from e
    except (RuntimeError, ValueError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e

    n_high, n_low = geom.counts()
    comp_high, _ = phase_components(geom)
    energy = energy_history(geom, trajectory, mcfg.boundary)
    console.rule("[bold cyan]Micro run[/bold cyan]")
    console.print(
        f"eps={eps:g}  h={geom.grid.h:.4g}  nodes: high={n_high} low={n_low}  "
        f"inclusions={len(geom.cell_index_set)}  stored times={len(trajectory)}"
    )
    console.print(f"||u - u_b||: {fmt(energy[0])} -> {fmt(energy[-1])}")
    console.print(f"[green][OK][/green] Wrote {path}")
    problems = []
    if comp_high != 1:
        problems.append(f"high phase has {comp_high} connected components")
    # data hull: u_b is monotone in t, so its extremes sit at t = 0 and t = T
    grid_pts = geom.grid.coords()
    data = np.concatenate(
        [trajectory[0].values.ravel(), mcfg.boundary(grid_pts, 0.0).ravel(), mcfg.boundary(grid_pts, mcfg.T).ravel()]
    )
    lo, hi = float(data.min()), float(data.max())
    outside = sum(int(np.any((s.values < lo - 1e-12) | (s.values > hi + 1e-12))) for s in trajectory)
    if outside:
        problems.append(f"{outside} stored state(s) leave the data range [{fmt(lo)}, {fmt(hi)}]")
    finish(problems, cfg.run.strict)


@app.command()
def macro(
    config: Path | None = ConfigOption,
    out: Path | None = OutOption,
    epsilon: float | None = typer.Option(None, "--epsilon", "-e", help="Scale whose time step the run follows"),
    radius_spec: str | None = typer.Option(None, "--radius-spec", help="e.g. linear:r0=0.2,a=0.05"),
    H: float | None = typer.Option(None, "--H", help="Macro grid spacing"),
    m: int | None = typer.Option(None, "--m", help="Radial cells per inclusion"),
    n: int | None = typer.Option(None, "--n", help="Cell grid resolution of the table"),
    T: float | None = typer.Option(None, "--T", help="Time horizon"),
    dt: float | None = typer.Option(None, "--dt", help="Time step"),
    velocity: str | None = typer.Option(None, "--velocity", help="none or stream:amplitude=A"),
    table_path: Path | None = typer.Option(
        None, "--table", help="table.csv written by `homog cell` (default: solve the cell problems)"
    ),
    strict: bool | None = StrictOption,
    debug: bool = DebugOption,
):
    """Simulate the two-scale limit model (macro_u.csv, macro_v.csv)."""
    set_debug(debug)
    overrides: dict[str, Any] = {
        "run.epsilon": epsilon,
        "geometry.radius": radius_override(radius_spec),
        "discretization.H": H,
        "discretization.m": m,
        "discretization.n": n,
        "discretization.T": T,
        "discretization.dt": dt,
        "physics.velocity": velocity_override(velocity),
        "run.strict": strict,
    }
    cfg = load_config("macro", config, overrides)
    out_dir = out_dir_for(cfg, out)
    stamp = stamp_for(cfg)
    try:
        with output_lock(out_dir):
            if table_path is not None:
                table = read_table(table_path)
                logger.info("Loaded effective table %s (%d radii)", table_path, table.radii.size)
            else:
                table = build_table(
                    cfg.table_radii(), cfg.discretization.n, cfg.physics.D_h, threads=cfg.run.threads
                )
            ts_cfg = TwoScaleConfig.from_config(cfg, table)
            states = run_twoscale(ts_cfg)
            grid = build_macro_grid(ts_cfg)

            op = assemble_macro(ts_cfg)
            first = initial_twoscale(op, ts_cfg)
            balance = mass_balance(first, step_twoscale(first, op, ts_cfg), op)

            echo_config(cfg, out_dir)
            final = states[-1]
            X = grid.coords()
            meta = {"H": ts_cfg.H, "m": ts_cfg.m, "T": ts_cfg.T, "dt": ts_cfg.dt}
            u_rows = [(float(p[0]), float(p[1]), float(u)) for p, u in zip(X.reshape(-1, 2), final.u.ravel())]
            path_u = write_csv(out_dir / "macro_u.csv", ("x", "y", "u0"), u_rows, stamp=stamp, meta=meta)
            v_rows = []
            for i in range(grid.shape[0]):
                for k in range(grid.shape[1]):
                    if grid.r[i, k] <= 0.0:
                        continue
                    s, vals = final.profile(i, k)
                    for rho, v in zip(s * grid.r[i, k], vals):
                        v_rows.append((float(grid.xs[i]), float(grid.ys[k]), float(rho), float(v)))
            path_v = write_csv(out_dir / "macro_v.csv", ("x", "y", "rho", "v0"), v_rows, stamp=stamp, meta=meta)
    except SolverError as e:
        console.print(f"[red]Two-scale solve failed:[/red] {e}")
        raise typer.Exit(EXIT_SOLVER) from e
    except (RuntimeError, ValueError, OSError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e

    console.rule("[bold cyan]Two-scale run[/bold cyan]")
    console.print(
        f"H={ts_cfg.H:g}  m={ts_cfg.m}  macro nodes={grid.r.size}  stored times={len(states)}  "
        f"u0 range [{fmt(float(final.u.min()))}, {fmt(float(final.u.max()))}]"
    )
    console.print(
        f"Mass balance (first step): storage {fmt(balance.storage_rate)}  flux {fmt(balance.boundary_flux)}  "
        f"discrepancy {balance.discrepancy:.3e} {verdict(balance.ok)}"
    )
    console.print(f"[green][OK][/green] Wrote {path_u} and {path_v}")
    problems = [] if balance.ok else [f"mass balance discrepancy {balance.discrepancy:.3e} exceeds 1%"]
    finish(problems, cfg.run.strict)


@app.command()
def correctors(
    config: Path | None = ConfigOption,
    out: Path | None = OutOption,
    eps: str | None = typer.Option(None, "--eps", help="Comma list of scales, e.g. 1/8,1/16,1/32"),
    radius_spec: str | None = typer.Option(None, "--radius-spec", help="e.g. constant:r0=0.25"),
    T: float | None = typer.Option(None, "--T", help="Time horizon"),
    h_ratio: int | None = typer.Option(None, "--h-ratio", help="Fine grid spacing h = eps / h_ratio"),
    no_floor: bool = typer.Option(False, "--no-floor", help="Skip the inclusion-free floor ladder"),
    threads: int | None = typer.Option(None, "--threads", help="Worker cap (HOMOG_THREADS wins)"),
    strict: bool | None = StrictOption,
    debug: bool = DebugOption,
):
    """Run the eps ladder, measure the corrector norms and fit their rates (rates.csv)."""
    set_debug(debug)
    overrides: dict[str, Any] = {
        "run.eps": float_list(eps),
        "geometry.radius": radius_override(radius_spec),
        "discretization.T": T,
        "discretization.h_ratio": h_ratio,
        "run.threads": threads,
        "run.strict": strict,
    }
    cfg = load_config("correctors", config, overrides)
    out_dir = out_dir_for(cfg, out)
    stamp = stamp_for(cfg)
    try:
        with output_lock(out_dir):
            report = run_ladder(cfg, with_floor=not no_floor)
            echo_config(cfg, out_dir)
            path = write_csv(
                out_dir / "rates.csv",
                RATE_COLUMNS,
                [r.as_row() for r in report.rows],
                stamp=stamp,
                meta=report.meta,
            )
            floor_lines = [
                "floor " + " ".join(f"{c}={v:.17g}" for c, v in zip(RATE_COLUMNS, r.as_row())) for r in report.floor
            ]
            append_block(path, report.summary_lines() + floor_lines)
            write_csv(
                out_dir / "rates_cutoff.csv",
                CUTOFF_COLUMNS,
                [(r.eps, r.N3_L2, r.N3chi_L2 if r.N3chi_L2 is not None else float("nan")) for r in report.rows],
                stamp=stamp,
            )
    except LadderError as e:
        console.print(f"[red]Ladder failed:[/red] {e}")
        raise typer.Exit(EXIT_SOLVER) from e
    except SolverError as e:
        console.print(f"[red]Solve failed:[/red] {e}")
        raise typer.Exit(EXIT_SOLVER) from e
    except (RuntimeError, ValueError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e

    console.rule("[bold cyan]Corrector norms[/bold cyan]")
    t = Table(show_header=True, header_style="bold")
    for col in RATE_COLUMNS:
        t.add_column(col, justify="right")
    for r in report.rows:
        t.add_row(*(fmt(v) for v in r.as_row()))
    fit_row = ["p"] + [fmt(report.fits[c][0]) for c in NORM_COLUMNS]
    t.add_row(*fit_row, style="bold")
    console.print(t)
    console.print(f"[green][OK][/green] Wrote {path}")
    finish(report.failures(), cfg.run.strict)


# Subcommands defined in sibling modules
from homog_cli.lemmas import lemmas_app  # noqa: E402

app.add_typer(lemmas_app, name="lemmas")

if __name__ == "__main__":
    app()
