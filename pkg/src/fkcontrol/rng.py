"""Counter-based Gaussian noise keyed by (seed, step, rollout, state).

Philox4x32-10 turns a 128-bit counter and a 64-bit key into four 32-bit words
with no internal state, so any draw can be recomputed independently of the
order in which work is scheduled. The same round function is compiled with
numba for the kernels and run on uint64 arrays for the numpy path; both give
bit-identical words.
"""
import math

import numpy as np

from ._accel import njit
from .errors import ParameterError

_MASK = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi

# noise streams, mixed into the top bits of the last counter word
STREAM_SAMPLER = 0
STREAM_CLOSED_LOOP = 1
_STREAM_SHIFT = 24


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds. All arguments are uint64 holding 32-bit values."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


_philox_nb = njit(inline="always")(philox4x32)


@njit(inline="always")
def normal_pair_nb(k0, k1, step, rollout, state, word3):
    w0, w1, w2, w3 = _philox_nb(np.uint64(step), np.uint64(rollout), np.uint64(state),
                                np.uint64(word3), k0, k1)
    a = ((w0 << _S32) | w1) >> _S11
    b = ((w2 << _S32) | w3) >> _S11
    u1 = (np.float64(a) + 1.0) * _TWO_M53
    u2 = np.float64(b) * _TWO_M53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(_TWO_PI * u2), r * math.sin(_TWO_PI * u2)


@njit(inline="always")
def fill_normals_nb(k0, k1, step, rollout, state, stream, out):
    """Write ``len(out)`` standard normals for one (step, rollout, state)."""
    m = out.shape[0]
    for blk in range((m + 1) // 2):
        z0, z1 = normal_pair_nb(k0, k1, step, rollout, state, (stream << _STREAM_SHIFT) | blk)
        out[2 * blk] = z0
        if 2 * blk + 1 < m:
            out[2 * blk + 1] = z1


def split_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def keyed_normals(seed, step, rollout, state, m, stream=STREAM_SAMPLER):
    """Vectorized standard normals, shape ``broadcast(rollout, state).shape + (m,)``.

    Entry ``[..., c]`` is the same number the numba kernels draw for component
    ``c`` at the given step, rollout and state.
    """
    k0, k1 = split_seed(seed)
    rollout = np.asarray(rollout, dtype=np.uint64)
    state = np.asarray(state, dtype=np.uint64)
    rollout, state = np.broadcast_arrays(rollout, state)
    step_w = np.full(rollout.shape, step, dtype=np.uint64)
    out = np.empty(rollout.shape + (m,))
    for blk in range((m + 1) // 2):
        w3 = np.full(rollout.shape, (stream << _STREAM_SHIFT) | blk, dtype=np.uint64)
        w0, w1, w2, w3 = philox4x32(step_w, rollout, state, w3, k0, k1)
        a = ((w0 << _S32) | w1) >> _S11
        b = ((w2 << _S32) | w3) >> _S11
        u1 = (a.astype(np.float64) + 1.0) * _TWO_M53
        u2 = b.astype(np.float64) * _TWO_M53
        r = np.sqrt(-2.0 * np.log(u1))
        out[..., 2 * blk] = r * np.cos(_TWO_PI * u2)
        if 2 * blk + 1 < m:
            out[..., 2 * blk + 1] = r * np.sin(_TWO_PI * u2)
    return out
