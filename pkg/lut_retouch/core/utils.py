# lut_retouch/core/utils.py

import hashlib
import os
from typing import List, Optional

from .config import IMAGE_EXTENSIONS, THREADS_ENV_VAR
from .errors import ConfigError


def thread_cap() -> int:
    """
    Returns the maximum number of worker threads.

    The `ICELUT_THREADS` environment variable caps the count; without it the
    CPU count is used. Values that are not positive integers are rejected so
    a typo does not silently serialize or oversubscribe a run.

    Raises:
        ConfigError: If the environment variable is set but not a positive integer.
    """
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None or not raw.strip():
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got '{raw}'.") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got '{raw}'.")
    return value


def resolve_threads(requested: Optional[int]) -> int:
    """Clamps a requested thread count to [1, thread_cap()]; None means the cap."""
    cap = thread_cap()
    if requested is None:
        return cap
    if requested < 1:
        raise ConfigError(f"Thread count must be >= 1, got {requested}.")
    return min(requested, cap)


def sha256_file(path: str) -> str:
    """Hex SHA-256 digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def list_images(directory: str) -> List[str]:
    """Sorted file names in `directory` with a supported image suffix."""
    return sorted(
        name
        for name in os.listdir(directory)
        if os.path.splitext(name)[1].lower() in IMAGE_EXTENSIONS
        and os.path.isfile(os.path.join(directory, name))
    )


def ensure_parent_dir(path: str) -> None:
    """Creates the directory that will hold `path` if it is missing."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
