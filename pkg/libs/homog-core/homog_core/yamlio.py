"""Config file parsing with line-numbered validation, and config echo."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from io import StringIO
from pathlib import Path
from typing import Any

from pydantic import ValidationError
from ruamel.yaml import YAML
from ruamel.yaml.comments import CommentedMap
from ruamel.yaml.error import YAMLError

from homog_core.models import RunConfig

logger = logging.getLogger(__name__)

# Round-trip loader keeps node positions for error messages
yaml = YAML()
yaml.preserve_quotes = True
yaml.default_flow_style = False
yaml.width = 4096

SECTIONS = ("geometry", "physics", "discretization", "run")


class ConfigError(ValueError):
    """Invalid configuration; carries every violation found, not just the first."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


def _line_of(data: Any, loc: Iterable[Any]) -> int | None:
    """1-based line of the deepest key of `loc` present in the round-trip document."""
    node = data
    line: int | None = None
    for key in loc:
        if isinstance(node, CommentedMap) and key in node:
            try:
                line = node.lc.key(key)[0] + 1
            except (KeyError, TypeError, AttributeError):
                pass
            node = node[key]
        elif isinstance(node, list) and isinstance(key, int) and 0 <= key < len(node):
            node = node[key]
        else:
            break
    return line


def _format(source: str, line: int | None, loc: Iterable[Any], msg: str) -> str:
    where = ".".join(str(p) for p in loc)
    prefix = f"{source}:{line}" if line is not None else source
    return f"{prefix}: {where}: {msg}" if where else f"{prefix}: {msg}"


def apply_overrides(data: dict[str, Any], overrides: Mapping[str, Any]) -> None:
    """Apply dotted-key overrides (e.g. {"discretization.T": 0.1}) in place."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        parts = dotted.split(".")
        node = data
        for p in parts[:-1]:
            child = node.get(p)
            if not isinstance(child, dict):
                child = {}
                node[p] = child
            node = child
        node[parts[-1]] = value


def _is_unit_fraction(eps: float) -> bool:
    inv = 1.0 / eps
    return abs(inv - round(inv)) <= 1e-9 * inv and round(inv) >= 1


def _divides(length: float, h: float) -> bool:
    k = length / h
    return abs(k - round(k)) <= 1e-9 * max(k, 1.0) and round(k) >= 1


def cross_check(cfg: RunConfig) -> list[tuple[tuple[Any, ...], str]]:
    """Cross-field checks that downstream solvers would otherwise fail on."""
    out: list[tuple[tuple[Any, ...], str]] = []
    geo, phys, disc, run = cfg.geometry, cfg.physics, cfg.discretization, cfg.run
    x0, x1, y0, y1 = geo.omega
    if not (x1 > x0 and y1 > y0):
        out.append((("geometry", "omega"), "omega must satisfy x0 < x1 and y0 < y1"))
        return out

    if geo.r_max is not None and geo.r_max >= 0.5:
        out.append((("geometry", "r_max"), "r_max must be < 0.5"))
    if geo.r_min is not None and geo.r_min < 0.0:
        out.append((("geometry", "r_min"), "r_min must be >= 0"))
    lo, hi = geo.radius.bounds(geo.omega)
    r_min, r_max = geo.radius_bounds()
    if r_min > r_max:
        out.append((("geometry", "r_min"), f"r_min={r_min} exceeds r_max={r_max}"))
    if hi >= 0.5:
        out.append((("geometry", "radius"), f"radius reaches {hi:.6g} over omega; r_max must be < 0.5"))
    if lo < r_min - 1e-12 or hi > r_max + 1e-12:
        out.append(
            (("geometry", "radius"), f"radius range [{lo:.6g}, {hi:.6g}] leaves [r_min, r_max]")
        )
    if lo < 0.0:
        out.append((("geometry", "radius"), "radius must be nonnegative"))
    if r_min == 0.0 and hi > 0.0:
        out.append((("geometry", "radius"), "r_min = 0 is only allowed for a radius that is identically 0"))

    scales: list[tuple[Any, ...]] = [("run", "epsilon")] + [("run", "eps", i) for i in range(len(run.eps))]
    values = [run.epsilon, *run.eps]
    for loc, eps in zip(scales, values):
        if eps <= 0 or not _is_unit_fraction(eps):
            out.append((loc, f"epsilon={eps} must be 1/integer"))
            continue
        h = eps / disc.h_ratio
        if not (_divides(x1 - x0, eps) and _divides(y1 - y0, eps)):
            out.append((loc, f"epsilon={eps} does not tile omega"))
        if r_min > 0.0 and eps * r_min < 4.0 * h * (1.0 - 1e-12):
            out.append(
                (
                    ("discretization", "h_ratio"),
                    f"inclusions under-resolved at epsilon={eps}: eps*r_min={eps * r_min:.6g} < 4h={4 * h:.6g}",
                )
            )
    if cfg.command == "correctors" and len(run.eps) < 3:
        out.append((("run", "eps"), "a ladder needs at least 3 scales"))
    ordered = sorted(run.eps, reverse=True)
    if len(set(ordered)) != len(ordered):
        out.append((("run", "eps"), "duplicate scales"))
    elif any(abs(a / b - 2.0) > 1e-9 for a, b in zip(ordered, ordered[1:])):
        logger.warning("eps ladder %s is not halving; rate fit still valid", run.eps)

    if not (_divides(x1 - x0, disc.H) and _divides(y1 - y0, disc.H)):
        out.append((("discretization", "H"), f"H={disc.H} does not tile omega"))
    elif r_min > 0.0 and geo.radius.max_slope() * disc.H > r_min / 4.0:
        out.append(
            (("discretization", "H"), "radius varies more than r_min/4 between neighbouring macro nodes")
        )

    radii = cfg.table_radii()
    if len(radii) < 4:
        out.append((("discretization", "radii"), "table needs at least 4 radii"))
    if any(b <= a for a, b in zip(radii, radii[1:])):
        out.append((("discretization", "radii"), "table radii must be sorted and distinct"))
    if radii and (radii[0] < 0.0 or radii[-1] >= 0.5):
        out.append((("discretization", "radii"), "table radii must lie in [0, 0.5)"))
    if radii and (r_min < radii[0] - 1e-12 or r_max > radii[-1] + 1e-12):
        out.append((("discretization", "radii"), "table radii do not cover [r_min, r_max]"))

    b = phys.boundary
    if b.rate < 0.0:
        out.append((("physics", "boundary", "rate"), "rate must be >= 0 (boundary data may not increase)"))
    if abs(b.amplitude) > 1.0:
        out.append((("physics", "boundary", "amplitude"), "|amplitude| must be <= 1"))
    if b.rate > 0.0 and b.value < 0.0:
        out.append((("physics", "boundary", "value"), "decaying boundary data must be nonnegative"))
    if phys.initial_u.kind not in ("constant", "bump"):
        out.append((("physics", "initial_u", "kind"), "initial_u kind must be constant or bump"))
    if phys.initial_v.kind == "bump":
        out.append((("physics", "initial_v", "kind"), "initial_v kind must be match, constant or radial"))
    if phys.velocity.kind == "stream" and geo.radius.kind != "constant":
        out.append((("physics", "velocity"), "stream velocity requires a constant radius"))
    if not math.isfinite(disc.T):
        out.append((("discretization", "T"), "T must be finite"))
    return out


def load_document(path: Path) -> CommentedMap:
    """Load a config file as a round-trip mapping (empty file -> empty mapping)."""
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.load(f)
    except YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError([_format(str(path), line, (), f"malformed config: {e}")]) from e
    if data is None:
        return CommentedMap()
    if not isinstance(data, CommentedMap):
        raise ConfigError([_format(str(path), 1, (), "config must be a mapping of sections")])
    return data


def parse_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    *,
    command: str | None = None,
) -> RunConfig:
    """
    Build a validated RunConfig from an optional YAML file plus dotted overrides.

    Raises:
        ConfigError: with every violation, each prefixed by file and line when known.
    """
    source = str(path) if path is not None else "<defaults>"
    doc: CommentedMap = load_document(path) if path is not None else CommentedMap()
    violations: list[str] = []

    for key in doc:
        if key not in SECTIONS and key != "command":
            violations.append(_format(source, _line_of(doc, (key,)), (key,), "unknown section"))

    data: dict[str, Any] = _plain(doc)
    if command is not None:
        data["command"] = command
    apply_overrides(data, overrides or {})

    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        for err in e.errors():
            loc = tuple(err["loc"])
            msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
            violations.append(_format(source, _line_of(doc, loc), loc, msg))
        raise ConfigError(violations) from e

    for loc, msg in cross_check(cfg):
        violations.append(_format(source, _line_of(doc, loc), loc, msg))
    if violations:
        raise ConfigError(violations)
    logger.info("Loaded config from %s", source)
    return cfg


def _plain(node: Any) -> Any:
    """Round-trip containers -> plain dict/list for validation."""
    if isinstance(node, Mapping):
        return {str(k): _plain(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_plain(v) for v in node]
    return node


def dump_config(cfg: RunConfig) -> str:
    """Config as YAML text (sorted keys, JSON-compatible values)."""
    stream = StringIO()
    yaml.dump(_sorted(cfg.model_dump(mode="json")), stream)
    return stream.getvalue()


def _sorted(node: Any) -> Any:
    if isinstance(node, dict):
        return {k: _sorted(node[k]) for k in sorted(node)}
    if isinstance(node, list):
        return [_sorted(v) for v in node]
    return node


def echo_config(cfg: RunConfig, out_dir: Path) -> Path:
    """Write config.yaml next to the outputs (atomically)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "config.yaml"
    temp_path = out_dir / f".{target.name}.homogtmp"
    temp_path.write_text(dump_config(cfg), encoding="utf-8")
    temp_path.replace(target)
    return target
