"""homog core - run configuration, digests, and deterministic output writers."""

from homog_core.csvio import Stamp, append_block, format_value, read_csv, render_csv, write_csv
from homog_core.digest import config_digest, normalize_config_for_digest
from homog_core.env import thread_cap
from homog_core.filelock import OutputLock, output_lock
from homog_core.models import (
    BoundarySpec,
    DiscretizationSection,
    GeometrySection,
    InitialSpec,
    PhysicsSection,
    RadiusSpec,
    RunConfig,
    RunSection,
    VelocitySpec,
)
from homog_core.yamlio import (
    ConfigError,
    apply_overrides,
    cross_check,
    dump_config,
    echo_config,
    load_document,
    parse_config,
)

__version__ = "0.1.0"

__all__ = [
    # config models
    "RunConfig",
    "GeometrySection",
    "PhysicsSection",
    "DiscretizationSection",
    "RunSection",
    "RadiusSpec",
    "VelocitySpec",
    "BoundarySpec",
    "InitialSpec",
    # config i/o
    "ConfigError",
    "parse_config",
    "load_document",
    "apply_overrides",
    "cross_check",
    "dump_config",
    "echo_config",
    "config_digest",
    "normalize_config_for_digest",
    # outputs
    "Stamp",
    "write_csv",
    "render_csv",
    "append_block",
    "read_csv",
    "format_value",
    "OutputLock",
    "output_lock",
    "thread_cap",
    "__version__",
]
