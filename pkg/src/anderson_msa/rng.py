"""Counter-based random numbers keyed by ``(seed, site)``.

Philox4x32-10 (Salmon et al., Random123) vectorised over numpy ``uint64``
arrays holding 32-bit words. Every draw is a pure function of the key and
the counter, so disorder values do not depend on sampling order or on how
realizations are split across workers.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# coordinates are stored as offset-binary 32-bit words
COORD_OFFSET = 1 << 31
# counter word 3 for site draws is the lattice dimension (1..3); seeds use this tag
_SEED_TAG = 0xFFFFFFFF


def philox4x32(counter: Iterable, key: tuple[int, int], rounds: int = 10) -> list[np.ndarray]:
    """Apply Philox4x32 to four counter words (scalars or equal-shape arrays)."""
    c = [np.asarray(w, dtype=np.uint64) & _MASK32 for w in counter]
    if len(c) != 4:
        raise ValueError("philox4x32 needs exactly four counter words")
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c[0]
        p1 = _M1 * c[2]
        c = [
            (p1 >> _SHIFT32) ^ c[1] ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c[3] ^ np.uint64(k1),
            p0 & _MASK32,
        ]
    return c


def _split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def _words_to_unit(w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    # 53-bit mantissa from two words: uniform on [0, 1)
    hi = (w0 >> np.uint64(5)).astype(np.float64)
    lo = (w1 >> np.uint64(6)).astype(np.float64)
    return (hi * 67108864.0 + lo) / 9007199254740992.0


def site_uniforms(seed: int, coords: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) draws, one per row of ``coords`` (integer sites, d <= 3)."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2:
        raise ValueError("coords must be a 2-d array of shape (n, d)")
    n, d = coords.shape
    if not 1 <= d <= 3:
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if n and np.abs(coords).max() >= COORD_OFFSET:
        raise ValueError("site coordinates exceed the 32-bit counter range")
    words = [np.zeros(n, dtype=np.uint64) for _ in range(3)]
    for i in range(d):
        words[i] = (coords[:, i] + COORD_OFFSET).astype(np.uint64)
    out = philox4x32([words[0], words[1], words[2], np.full(n, d, dtype=np.uint64)], _split_seed(seed))
    return _words_to_unit(out[0], out[1])


def derive_seed(seed: int, index: int) -> int:
    """64-bit sub-seed for realization ``index`` of a run keyed by ``seed``."""
    index = int(index)
    if index < 0:
        raise ValueError("index must be non-negative")
    out = philox4x32(
        [index & 0xFFFFFFFF, (index >> 32) & 0xFFFFFFFF, 0, _SEED_TAG], _split_seed(seed)
    )
    return (int(out[1]) << 32) | int(out[0])
