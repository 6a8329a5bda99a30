"""Test config parsing, cross-field checks and the output writers."""

from __future__ import annotations

import os

import pytest
from homog_core import (
    ConfigError,
    Stamp,
    append_block,
    output_lock,
    parse_config,
    read_csv,
    render_csv,
    thread_cap,
    write_csv,
)

from tests.framework import mk_config, write_config, write_file

STAMP = Stamp(version="0.1.0", digest="abc")


def test_defaults_are_valid():
    """Test that the built-in defaults pass every check."""
    cfg = parse_config()
    assert cfg.run.epsilon == 0.125
    assert cfg.h_for(0.125) == pytest.approx(0.125 / 32)
    assert cfg.dt_for(0.125) == cfg.h_for(0.125)
    assert cfg.table_radii()[0] == 0.0
    assert cfg.table_radii()[-1] == pytest.approx(0.25)


def test_tiny_config_loads(tmp_path):
    """Test that the test-suite config parses from YAML."""
    path = write_config(tmp_path / "run.yaml", mk_config())
    cfg = parse_config(path)
    assert cfg.geometry.exclusion == 0.5
    assert cfg.discretization.h_ratio == 16


def test_overrides_win_over_file(tmp_path):
    """Test that dotted overrides replace file values and None overrides are ignored."""
    path = write_config(tmp_path / "run.yaml", mk_config())
    cfg = parse_config(path, {"run.epsilon": 0.125, "physics.D_l": None})
    assert cfg.run.epsilon == 0.125
    assert cfg.physics.D_l == 1.0


def test_unknown_key_reports_line(tmp_path):
    """Test that an unknown key is reported with file and line."""
    path = tmp_path / "bad.yaml"
    write_file(path, "geometry:\n  radius:\n    kind: constant\n    r0: 0.25\n  colour: red\n")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert any(f"{path}:5: geometry.colour: unknown key" in v for v in err.value.violations)


def test_unknown_section_reported(tmp_path):
    """Test that a top-level key outside the four sections is rejected."""
    path = tmp_path / "bad.yaml"
    write_file(path, "geometry: {}\nsolver: {}\n")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert any("solver: unknown section" in v for v in err.value.violations)


def test_every_violation_is_collected(tmp_path):
    """Test that cross-field checks report all problems at once."""
    path = write_config(
        tmp_path / "bad.yaml",
        mk_config(geometry={"r_max": 0.6}, run={"epsilon": 0.3}),
    )
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    text = "\n".join(err.value.violations)
    assert "r_max must be < 0.5" in text
    assert "must be 1/integer" in text
    assert len(err.value.violations) >= 2


def test_under_resolved_inclusions_rejected():
    """Test that eps * r_min < 4h is a config error."""
    with pytest.raises(ConfigError, match="under-resolved"):
        parse_config(None, {"discretization.h_ratio": 8})


def test_ladder_needs_three_scales():
    """Test that the corrector ladder refuses fewer than three scales."""
    with pytest.raises(ConfigError, match="at least 3 scales"):
        parse_config(None, {"run.eps": [0.125, 0.0625]}, command="correctors")
    # other commands accept a short ladder
    parse_config(None, {"run.eps": [0.125, 0.0625]}, command="cell")


def test_increasing_boundary_data_rejected():
    """Test that a negative decay rate is rejected."""
    with pytest.raises(ConfigError, match="rate must be >= 0"):
        parse_config(None, {"physics.boundary": {"kind": "decay", "rate": -1.0}})


def test_malformed_yaml(tmp_path):
    """Test that a YAML syntax error becomes a ConfigError with a line."""
    path = tmp_path / "broken.yaml"
    write_file(path, "geometry:\n  radius: [1, 2\n")
    with pytest.raises(ConfigError, match="malformed config"):
        parse_config(path)


def test_render_csv_header_and_precision():
    """Test the provenance header, meta lines and round-trip float formatting."""
    text = render_csv(("x", "flag"), [(0.1, True)], stamp=STAMP, meta={"n": 32})
    lines = text.splitlines()
    assert lines[0] == "# homog 0.1.0 config=abc"
    assert lines[1] == "# n=32"
    assert lines[2] == "x,flag"
    assert lines[3] == "0.10000000000000001,1"


def test_render_csv_rejects_ragged_rows():
    """Test that a row with the wrong width is refused."""
    with pytest.raises(ValueError, match="2 values for 3 columns"):
        render_csv(("a", "b", "c"), [(1, 2)], stamp=STAMP)


def test_write_and_read_csv(tmp_path):
    """Test that written artifacts parse back and leave no temp files behind."""
    path = write_csv(tmp_path / "out.csv", ("eps", "N1"), [(0.25, 1.5)], stamp=STAMP, meta={"T": 0.5})
    append_block(path, ["fit N1: p=1"])
    meta, columns, rows = read_csv(path)
    assert meta["stamp"] == "homog 0.1.0 config=abc"
    assert meta["T"] == "0.5"
    assert meta["fit N1: p"] == "1"
    assert columns == ["eps", "N1"]
    assert rows == [["0.25", "1.5"]]
    assert not list(tmp_path.glob(".*.homogtmp"))


def test_output_lock_is_exclusive(tmp_path):
    """Test that a second run into the same directory is refused."""
    with output_lock(tmp_path) as lock:
        assert lock.held
        with pytest.raises(RuntimeError, match=rf"Another homog run .*pid={os.getpid()}"):
            with output_lock(tmp_path):
                pass
    assert not lock.held
    # released again
    with output_lock(tmp_path):
        pass


def test_thread_cap_env_wins(monkeypatch):
    """Test that HOMOG_THREADS overrides the configured worker count."""
    monkeypatch.setenv("HOMOG_THREADS", "3")
    assert thread_cap(8) == 3
    monkeypatch.setenv("HOMOG_THREADS", "many")
    with pytest.raises(ValueError, match="HOMOG_THREADS"):
        thread_cap()
    monkeypatch.delenv("HOMOG_THREADS")
    assert thread_cap(5) == 5
