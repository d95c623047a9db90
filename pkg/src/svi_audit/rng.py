"""Counter-based, seedable random streams (splitmix64).

A value is a pure function of (seed, stream, counter), so any draw can be
reproduced in isolation and parallel workers never share generator state.
"""

import hashlib

from ._core import kernels


def stream_id(*parts) -> int:
    """Stable 64-bit stream id for a tuple of labels."""
    h = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def uniform(seed: int, stream: int, counter: int) -> float:
    return float(kernels.uniform(seed, stream, counter))


def uniforms(seed: int, stream: int, start: int, count: int):
    return kernels.uniforms(seed, stream, start, count)
