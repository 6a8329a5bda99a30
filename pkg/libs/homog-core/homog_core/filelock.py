"""Output-directory lock so two runs never interleave writes into one directory."""

import logging
import os
import sys
import time
from collections.abc import Generator
from contextlib import contextmanager
from pathlib import Path

if sys.platform != "win32":
    import fcntl

logger = logging.getLogger(__name__)

LOCK_NAME = ".homog.lock"
STALE_SECONDS = 300


class OutputLock:
    """
    Non-blocking exclusive lock on `<out_dir>/.homog.lock`.

    The holder writes its pid and argv into the file so a refused run can say who
    holds the directory. On Unix the lock is an flock on the open descriptor and
    goes away with the process; elsewhere the file itself is the lock and a file
    older than STALE_SECONDS is taken over.
    """

    def __init__(self, out_dir: Path):
        self.path = out_dir / LOCK_NAME
        self._fd: int | None = None

    @property
    def held(self) -> bool:
        return self._fd is not None

    def holder(self) -> str:
        try:
            return self.path.read_text(encoding="utf-8").strip() or "unknown"
        except OSError:
            return "unknown"

    def _claim_exclusive_file(self) -> int | None:
        try:
            return os.open(str(self.path), os.O_CREAT | os.O_EXCL | os.O_RDWR)
        except FileExistsError:
            age = time.time() - self.path.stat().st_mtime
            if age <= STALE_SECONDS:
                return None
            logger.warning("Taking over stale lock %s (%.0fs old)", self.path, age)
            self.path.unlink(missing_ok=True)
            return self._claim_exclusive_file()

    def _claim_flock(self) -> int | None:
        fd = os.open(str(self.path), os.O_CREAT | os.O_RDWR)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            os.close(fd)
            return None
        return fd

    def acquire(self) -> bool:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd = self._claim_exclusive_file() if sys.platform == "win32" else self._claim_flock()
        if fd is None:
            return False
        os.ftruncate(fd, 0)
        os.write(fd, f"pid={os.getpid()} argv={' '.join(sys.argv)}\n".encode())
        self._fd = fd
        return True

    def release(self) -> None:
        if self._fd is None:
            return
        if sys.platform != "win32":
            os.ftruncate(self._fd, 0)
            fcntl.flock(self._fd, fcntl.LOCK_UN)
        os.close(self._fd)
        if sys.platform == "win32":
            self.path.unlink(missing_ok=True)
        self._fd = None


@contextmanager
def output_lock(out_dir: Path) -> Generator[OutputLock, None, None]:
    """
    Hold the output directory for the duration of one run.

    Raises:
        RuntimeError: If another run holds the directory
    """
    lock = OutputLock(out_dir)
    if not lock.acquire():
        raise RuntimeError(
            f"Another homog run is writing to {out_dir} ({lock.holder()}). "
            f"If this is incorrect, remove {LOCK_NAME}"
        )
    try:
        yield lock
    finally:
        lock.release()
