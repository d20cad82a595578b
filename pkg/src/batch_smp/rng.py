"""Counter-based Gaussian noise (Philox4x32-10 + Box-Muller).

Every normal variate is a pure function of ``(seed, tag, stream, path, index)``,
so a path's noise does not depend on the batch size it was drawn with and
any subset of paths can be generated independently.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds: int = 10):
    """Vectorized Philox4x32 block function on 32-bit words held in uint64 arrays."""
    c0, c1, c2, c3 = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3)))
    k0 = np.uint64(int(k0) & 0xFFFFFFFF)
    k1 = np.uint64(int(k1) & 0xFFFFFFFF)
    for _ in range(rounds):
        p0 = c0 * _M0
        p1 = c2 * _M1
        c0, c1, c2, c3 = (p1 >> _SHIFT) ^ c1 ^ k0, p1 & _MASK, (p0 >> _SHIFT) ^ c3 ^ k1, p0 & _MASK
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def standard_normals(seed: int, tag: int, streams, paths, count: int) -> np.ndarray:
    """Standard normals of shape ``(len(streams), len(paths), count)``.

    ``streams`` and ``paths`` are integer sequences (< 2**32); each Philox block
    yields two 53-bit uniforms and hence two normals.
    """
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    streams = np.asarray(streams, dtype=np.uint64).reshape(-1, 1, 1)
    paths = np.asarray(paths, dtype=np.uint64).reshape(1, -1, 1)
    nblocks = (count + 1) // 2
    blocks = np.arange(nblocks, dtype=np.uint64).reshape(1, 1, -1)
    w0, w1, w2, w3 = philox4x32(blocks, paths, streams, np.uint64(tag), seed & 0xFFFFFFFF, seed >> 32)
    # 53-bit uniforms in (0, 1), same bit split as numpy's random_double
    u1 = ((w0 >> np.uint64(5)).astype(np.float64) * 67108864.0 + (w1 >> np.uint64(6)).astype(np.float64) + 0.5) / 9007199254740992.0
    u2 = ((w2 >> np.uint64(5)).astype(np.float64) * 67108864.0 + (w3 >> np.uint64(6)).astype(np.float64) + 0.5) / 9007199254740992.0
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(streams.shape[:1] + paths.shape[1:2] + (2 * nblocks,))
    out[..., 0::2] = r * np.cos(theta)
    out[..., 1::2] = r * np.sin(theta)
    return out[..., :count]
