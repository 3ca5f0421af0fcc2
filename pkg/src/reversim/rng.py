"""Counter-based uniform streams.

Every draw is a pure function of ``(seed, stream, draw)``, hashed with the
SplitMix64 finalizer.  Nothing is carried between streams, so a trial's
randomness does not depend on how many other trials ran, in what order, or
on how many threads.  :class:`Stream` is the scalar, sequential view used by
the single-trial functions; :func:`uniforms` evaluates the same values for
whole arrays of streams at once, so vectorized ensembles reproduce the
scalar loops draw for draw.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def _mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _stream_key(seed: int, stream: int) -> int:
    return _mix(_mix(seed + _GOLDEN) ^ _mix(stream + 2 * _GOLDEN))


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit child seed, e.g. one per ensemble in a study."""
    return _mix(_stream_key(seed, index) + 3 * _GOLDEN)


class Stream:
    """Sequential uniforms in [0, 1) for one ``(seed, stream)`` pair.

    Owned by one execution context at a time; ``random()`` advances an
    internal draw counter.
    """

    __slots__ = ("seed", "stream", "counter", "_key")

    def __init__(self, seed: int, stream: int = 0, counter: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        self.counter = int(counter)
        self._key = _stream_key(self.seed, self.stream)

    def random(self) -> float:
        z = _mix(self._key + (self.counter + 1) * _GOLDEN)
        self.counter += 1
        return (z >> 11) * _INV53

    def __repr__(self):
        return f"Stream(seed={self.seed}, stream={self.stream}, counter={self.counter})"


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, streams) -> np.ndarray:
    streams = np.asarray(streams, dtype=np.uint64)
    seed_key = np.uint64(_mix((int(seed) & MASK64) + _GOLDEN))
    with np.errstate(over="ignore"):
        return _mix_array(_mix_array(streams + np.uint64(2 * _GOLDEN & MASK64)) ^ seed_key)


def uniforms(keys: np.ndarray, draw: int) -> np.ndarray:
    """Draw number ``draw`` (0-based) of every stream whose key is in ``keys``."""
    offset = np.uint64(((draw + 1) * _GOLDEN) & MASK64)
    with np.errstate(over="ignore"):
        z = _mix_array(keys + offset)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53
