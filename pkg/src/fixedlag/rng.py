"""Counter-based random streams keyed by (seed, time, particle, purpose).

Every draw is a pure function of its coordinates, so particles can be
simulated in any order (or in parallel) and still produce bit-identical
results.  The mixing function is the SplitMix64 finalizer; stream ``key``
produces the SplitMix64 sequence ``mix(key + (j + 1) * GAMMA)``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = ["RngContract", "Stream", "derive_stream", "tag_code"]

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _word(value) -> np.ndarray:
    """Reduce Python ints (possibly negative or > 64 bits) to uint64."""
    if isinstance(value, (int, np.integer)):
        return np.uint64(int(value) & _MASK)
    arr = np.asarray(value)
    if arr.dtype == np.uint64:
        return arr
    return arr.astype(np.int64).view(np.uint64)


def tag_code(tag: str | int) -> int:
    """Map a purpose tag to a stable 32-bit integer."""
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(tag.encode("utf-8"))


def _stream_key(seed, k, i, tag):
    with np.errstate(over="ignore"):
        h = _mix(_word(seed) + _GAMMA)
        for w in (k, i, tag_code(tag)):
            h = _mix(h ^ _mix(_word(w) + _GAMMA))
    return h


def _uniform_from_bits(bits):
    # open interval (0, 1): safe for inverse-CDF transforms
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def _draw_bits(key, draw):
    with np.errstate(over="ignore"):
        return _mix(key + _GAMMA * _word(np.asarray(draw) + 1))


@dataclass(frozen=True)
class Stream:
    """A single deterministic random stream.

    Draw ``j`` depends only on the stream key and ``j``, so slices can be
    requested in any order.
    """

    key: int

    def uniforms(self, count: int, offset: int = 0) -> np.ndarray:
        j = np.arange(offset, offset + count, dtype=np.uint64)
        return _uniform_from_bits(_draw_bits(np.uint64(self.key), j))

    def normals(self, count: int, offset: int = 0) -> np.ndarray:
        return ndtri(self.uniforms(count, offset))


def derive_stream(seed: int, k: int, i: int, tag: str | int) -> Stream:
    """Return the stream identified by ``(seed, k, i, tag)``."""
    return Stream(int(_stream_key(seed, k, i, tag)))


@dataclass(frozen=True)
class RngContract:
    """Master seed plus vectorised access to per-particle streams.

    ``uniforms(k, idx, tag)`` returns draw ``draw`` of stream
    ``(seed, k, i, tag)`` for every ``i`` in ``idx`` in one call, which is
    the same value ``derive_stream(seed, k, i, tag).uniforms(1, draw)``
    would give.
    """

    seed: int

    def stream(self, k: int, i: int, tag: str | int) -> Stream:
        return derive_stream(self.seed, k, i, tag)

    def uniforms(self, k: int, idx, tag: str | int, draw: int = 0) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        keys = _stream_key(self.seed, k, idx, tag)
        return _uniform_from_bits(_draw_bits(keys, draw))

    def normals(self, k: int, idx, tag: str | int, draw: int = 0) -> np.ndarray:
        return ndtri(self.uniforms(k, idx, tag, draw))

    def child(self, *words: int | str) -> "RngContract":
        """Derive an independent contract, e.g. per replicate or EM iteration."""
        with np.errstate(over="ignore"):
            h = _mix(_word(self.seed) + _GAMMA)
            for w in words:
                w = tag_code(w) if isinstance(w, str) else w
                h = _mix(h ^ _mix(_word(w) + _GAMMA))
        return RngContract(int(h))
