import numpy as np
import pytest

from morphwalk.errors import ConfigError
from morphwalk.parallel import get_threads, resolve_threads, set_threads
from morphwalk.rng import shard_streams, stream


def test_streams_reproducible_and_distinct():
    a = stream(1, "chain", 0).random(5)
    assert np.array_equal(a, stream(1, "chain", 0).random(5))
    assert not np.array_equal(a, stream(1, "chain", 1).random(5))
    assert not np.array_equal(a, stream(2, "chain", 0).random(5))


def test_stream_independent_of_siblings():
    s = shard_streams(3, "x", 10)
    assert np.array_equal(s[4].random(3), stream(3, "x", 4).random(3))


def test_negative_path_rejected():
    with pytest.raises(ValueError):
        stream(1, -1)


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv("MORPHWALK_THREADS", raising=False)
    assert resolve_threads() == 1
    assert resolve_threads(3) == 3
    assert resolve_threads(0) >= 1
    monkeypatch.setenv("MORPHWALK_THREADS", "2")
    assert resolve_threads() == 2
    with pytest.raises(ConfigError):
        resolve_threads(-1)
    old = get_threads()
    try:
        set_threads(2)
        assert get_threads() == 2
    finally:
        set_threads(old)
