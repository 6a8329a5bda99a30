"""Config digest stamped into every output header."""

import hashlib

from homog_core.models import RunConfig
from homog_core.yamlio import dump_config


def normalize_config_for_digest(cfg: RunConfig) -> str:
    """
    Canonicalize a config for digest computation.
    Drops the output directory (it does not change any number) and dumps sorted YAML.
    """
    clean = cfg.model_copy(update={"run": cfg.run.model_copy(update={"out": ""})})
    return dump_config(clean)


def config_digest(cfg: RunConfig) -> str:
    """
    Compute the SHA256 digest of a run configuration.

    Args:
        cfg: Validated run configuration

    Returns:
        SHA256 hex digest string
    """
    hasher = hashlib.sha256()
    hasher.update(normalize_config_for_digest(cfg).encode("utf-8"))
    return hasher.hexdigest()
