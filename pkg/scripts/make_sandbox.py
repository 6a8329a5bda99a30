#!/usr/bin/env python3
"""
Create/clean a manual sandbox under ./sandbox using the real CLI (python -m homog_cli ...).
This is *separate* from pytest, useful for manual poking and demos.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SANDBOX = ROOT / "sandbox"

DEMO_CONFIG = """\
geometry:
  radius: {kind: linear, r0: 0.2, a: 0.05}
  exclusion: 0.5
physics:
  D_h: 1.0
  D_l: 0.5
discretization:
  h_ratio: 16
  n: 32
  H: 0.125
  m: 4
  T: 0.0625
  sample_every: 1
run:
  epsilon: 0.25
  eps: [0.25, 0.125, 0.0625]
"""


def run(args: list[str], check: bool = True):
    print(f"-> {' '.join(args)}")
    proc = subprocess.run(
        args, cwd=SANDBOX, env={**os.environ, "HOMOG_THREADS": "2"}, text=True, capture_output=True
    )
    print(proc.stdout)
    if check and proc.returncode not in (0, 3):  # 3 = acceptance check failed, artifacts still written
        print(proc.stderr, file=sys.stderr)
        raise SystemExit(proc.returncode)
    return proc


def homog(*args: str, check: bool = True):
    return run([sys.executable, "-m", "homog_cli", *args], check=check)


def build():
    SANDBOX.mkdir(exist_ok=True)
    config = SANDBOX / "demo.yaml"
    config.write_text(DEMO_CONFIG, encoding="utf-8")

    homog("check", str(config))
    homog("cell", "--config", str(config), "--out", "cell")
    homog("micro", "--config", str(config), "--out", "micro", "--dump-geometry")
    homog("macro", "--config", str(config), "--out", "macro")
    homog("lemmas", "--only", "strip,transport", "--out", "lemmas")

    for name in ("cell/table.csv", "micro/micro.csv", "micro/geometry.csv", "macro/macro_u.csv"):
        assert (SANDBOX / name).exists(), f"{name} should have been written"
    print("\n[OK] Sandbox built at ./sandbox")


def clean():
    if SANDBOX.exists():
        shutil.rmtree(SANDBOX)
    print("[OK] Sandbox cleaned")


if __name__ == "__main__":
    cmd = sys.argv[1] if len(sys.argv) > 1 else "build"
    if cmd == "build":
        build()
    elif cmd == "clean":
        clean()
    else:
        print("Usage: python scripts/make_sandbox.py [build|clean]")
        sys.exit(2)
