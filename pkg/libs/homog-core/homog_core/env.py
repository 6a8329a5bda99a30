"""Environment overrides."""

import os


def thread_cap(configured: int | None = None) -> int:
    """Worker cap: HOMOG_THREADS wins over the config value, then the CPU count."""
    env = os.environ.get("HOMOG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ValueError(f"HOMOG_THREADS must be an integer, got {env!r}") from e
    if configured is not None:
        return max(1, configured)
    return max(1, os.cpu_count() or 1)
