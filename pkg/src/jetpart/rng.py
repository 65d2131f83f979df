"""Counter-based random numbers (Philox4x32-10), vectorized over counters.

A draw depends only on ``(key, counter)``, so every vertex gets the same coin
no matter which PE evaluates it or in which order.
"""

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    ``counter`` has shape ``(..., 4)`` and ``key`` shape ``(..., 2)`` (32-bit
    words, broadcastable). Returns the ``(..., 4)`` output words as uint64.
    """
    ctr = np.asarray(counter, dtype=np.uint64) & _MASK
    k = np.asarray(key, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = ctr[..., 0], ctr[..., 1], ctr[..., 2], ctr[..., 3]
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = c0 * _M0
        p1 = c2 * _M1
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _SHIFT) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3), axis=-1)


def uniform(seed: int, stream: int, ids) -> np.ndarray:
    """One uniform double in [0, 1) per id, keyed by ``(seed, stream, id)``."""
    ids = np.asarray(ids, dtype=np.uint64)
    seed &= (1 << 64) - 1
    stream &= (1 << 64) - 1
    counter = np.zeros(ids.shape + (4,), dtype=np.uint64)
    counter[..., 0] = ids & _MASK
    counter[..., 1] = ids >> _SHIFT
    counter[..., 2] = stream & 0xFFFFFFFF
    counter[..., 3] = stream >> 32
    key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)
    out = philox4x32(counter, key)
    bits = ((out[..., 0] << _SHIFT) | out[..., 1]) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))
