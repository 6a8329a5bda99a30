"""Deterministic CSV artifacts with a provenance header."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Stamp:
    """Provenance written as the first line of every artifact."""

    version: str
    digest: str

    def header(self) -> str:
        return f"# homog {self.version} config={self.digest}"


def format_value(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def render_csv(
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    stamp: Stamp,
    meta: Mapping[str, Any] | None = None,
) -> str:
    lines = [stamp.header()]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={format_value(value)}")
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} values for {len(columns)} columns")
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    stamp: Stamp,
    meta: Mapping[str, Any] | None = None,
) -> Path:
    """Render in memory, then write atomically (temp file + rename)."""
    content = render_csv(columns, rows, stamp=stamp, meta=meta)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.parent / f".{path.name}.homogtmp"
    temp_path.write_text(content, encoding="utf-8")
    temp_path.replace(path)
    return path


def append_block(path: Path, lines: Sequence[str]) -> None:
    """Append '# '-prefixed summary lines to an existing artifact (atomic rewrite)."""
    content = path.read_text(encoding="utf-8") + "".join(f"# {line}\n" for line in lines)
    temp_path = path.parent / f".{path.name}.homogtmp"
    temp_path.write_text(content, encoding="utf-8")
    temp_path.replace(path)


def read_csv(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """
    Parse an artifact written by write_csv.

    Returns:
        (meta, columns, rows) where meta holds the `# key=value` lines and `stamp`.
    """
    meta: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        if raw.startswith("# homog "):
            meta["stamp"] = raw[2:]
        elif raw.startswith("# "):
            key, sep, value = raw[2:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
        elif not columns:
            columns = raw.split(",")
        elif raw:
            rows.append(raw.split(","))
    return meta, columns, rows
