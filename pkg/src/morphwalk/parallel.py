"""Process-wide worker count used by the FFT-based solver."""

import os

from .errors import ConfigError

_threads = None


def resolve_threads(value=None):
    """Worker count from ``value`` or MORPHWALK_THREADS; 0 means one per CPU."""
    if value is None:
        env = os.environ.get("MORPHWALK_THREADS")
        if env is None or env.strip() == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"MORPHWALK_THREADS must be an integer, got {env!r}") from None
    value = int(value)
    if value < 0:
        raise ConfigError(f"thread count must be >= 0, got {value}")
    return value or (os.cpu_count() or 1)


def set_threads(value=None):
    global _threads
    _threads = resolve_threads(value)
    return _threads


def get_threads():
    return _threads if _threads is not None else resolve_threads()
