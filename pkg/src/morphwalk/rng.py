"""Counter-based splittable random streams.

Every stream is a Philox generator keyed by a ``SeedSequence`` built from
``(seed, *path)``; e.g. chain ``i`` of experiment ``seed`` owns
``stream(seed, "chain", i)``. Streams with distinct paths are independent
and a stream's output never depends on how many other streams exist.
"""

import zlib

import numpy as np

__all__ = ["stream", "shard_streams"]


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    value = int(part)
    if value < 0:
        raise ValueError(f"stream path entries must be non-negative, got {value}")
    return value


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for the stream ``(seed, *path)``."""
    entropy = [_key(seed)] + [_key(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def shard_streams(seed, label, n_shards):
    return [stream(seed, label, i) for i in range(n_shards)]
