"""Test config digest computation."""

from homog_core import config_digest, normalize_config_for_digest, parse_config


def test_digest_is_deterministic():
    """Test that the same config always hashes the same."""
    a = parse_config(None, {"run.epsilon": 0.0625})
    b = parse_config(None, {"run.epsilon": 0.0625})
    assert config_digest(a) == config_digest(b)
    assert len(config_digest(a)) == 64


def test_digest_ignores_output_directory():
    """Test that the output directory does not change the digest."""
    a = parse_config(None, {"run.out": "out-a"})
    b = parse_config(None, {"run.out": "elsewhere/out-b"})
    assert config_digest(a) == config_digest(b)


def test_digest_changes_with_physics():
    """Test that any number that affects results changes the digest."""
    a = parse_config()
    b = parse_config(None, {"physics.D_l": 0.5})
    assert config_digest(a) != config_digest(b)


def test_digest_ignores_key_order(tmp_path):
    """Test that section and key order in the file do not matter."""
    one = tmp_path / "one.yaml"
    two = tmp_path / "two.yaml"
    one.write_text("physics:\n  D_h: 2.0\n  D_l: 0.5\nrun:\n  epsilon: 0.25\n", encoding="utf-8")
    two.write_text("run:\n  epsilon: 0.25\nphysics:\n  D_l: 0.5\n  D_h: 2.0\n", encoding="utf-8")
    assert config_digest(parse_config(one)) == config_digest(parse_config(two))


def test_normalized_form_is_sorted_yaml():
    """Test that the canonical form lists sections alphabetically."""
    text = normalize_config_for_digest(parse_config())
    keys = [line.split(":")[0] for line in text.splitlines() if line and not line.startswith(" ")]
    assert keys == sorted(keys)
    assert "out: ''" in text
