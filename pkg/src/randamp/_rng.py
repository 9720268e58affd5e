"""Counter-based random streams.

Every draw is addressed by (master seed, stream label, index), so any index
range can be generated independently and in any order with identical results.
"""

from __future__ import annotations

import numpy as np

_LANES = 4  # Philox4x64 emits four words per counter value
_INV_2_53 = 1.0 / (1 << 53)


def stream_key(seed: int, label: str) -> int:
    """128-bit Philox key for a named sub-stream of ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [seed & 0xFFFFFFFFFFFFFFFF, seed >> 64]
    ss = np.random.SeedSequence(entropy, spawn_key=tuple(label.encode()))
    lo, hi = ss.generate_state(2, dtype=np.uint64)
    return int(lo) | (int(hi) << 64)


def raw_words(key: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream as uint64."""
    if count <= 0:
        return np.zeros(0, dtype=np.uint64)
    q, r = divmod(start, _LANES)
    bg = np.random.Philox(key=key, counter=q)
    return bg.random_raw(r + count)[r:]


def uniforms(key: int, start: int, count: int) -> np.ndarray:
    """Doubles in [0, 1) with 53 random bits each, addressed like :func:`raw_words`."""
    return (raw_words(key, start, count) >> np.uint64(11)).astype(np.float64) * _INV_2_53
