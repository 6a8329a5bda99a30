# Re-export primary utilities for convenience
from .files import TINY, mk_config, read_file, write_config, write_file
from .sandbox import Sandbox

__all__ = ["Sandbox", "TINY", "mk_config", "write_config", "write_file", "read_file"]
