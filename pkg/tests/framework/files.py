from __future__ import annotations

from pathlib import Path
from typing import Any

import ruamel.yaml

_yaml = ruamel.yaml.YAML()
_yaml.default_flow_style = False


def write_file(p: Path, text: str) -> None:
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def read_file(p: Path) -> str:
    return p.read_text(encoding="utf-8")


def _merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


# Small enough for unit-speed CLI runs: eps = 1/4 with 16 grid cells per eps, one or two steps.
TINY: dict[str, Any] = {
    "geometry": {"radius": {"kind": "constant", "r0": 0.25}, "exclusion": 0.5},
    "physics": {"D_h": 1.0, "D_l": 1.0},
    "discretization": {"h_ratio": 16, "n": 32, "H": 0.125, "m": 4, "T": 0.03125, "sample_every": 1},
    "run": {"epsilon": 0.25, "eps": [0.25, 0.125, 0.0625]},
}


def mk_config(**sections: dict[str, Any]) -> dict[str, Any]:
    """TINY with per-section overrides merged in, e.g. mk_config(physics={"D_l": 0.5})."""
    return _merge(TINY, sections)


def write_config(p: Path, data: dict[str, Any]) -> Path:
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as f:
        _yaml.dump(data, f)
    return p
