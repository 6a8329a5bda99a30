from __future__ import annotations

from tests.framework import TINY, Sandbox, mk_config, read_file


def test_framework_smoke(tmp_path):
    """Prove the sandbox, config helpers and artifact reader work end-to-end."""
    sb = Sandbox(tmp_path)
    assert sb.env["HOMOG_THREADS"] == "2"

    merged = mk_config(physics={"D_l": 0.5})
    assert merged["physics"] == {"D_h": 1.0, "D_l": 0.5}
    assert TINY["physics"]["D_l"] == 1.0, "mk_config must not mutate TINY"

    cfg = sb.config(physics={"D_l": 0.5})
    assert "D_l: 0.5" in read_file(cfg)
    sb.run(["check", str(cfg)])

    sb.run(["cell", "--config", str(cfg), "--radii", "0,0.1,0.2,0.3"])
    meta, columns, rows = sb.artifact("table.csv")
    assert meta["stamp"].startswith("homog ")
    assert columns[0] == "r"
    assert [float(r[0]) for r in rows] == [0.0, 0.1, 0.2, 0.3]
    assert "D_l: 0.5" in sb.text("config.yaml")
