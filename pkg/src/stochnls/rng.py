"""Counter-based Gaussian noise for reproducible, order-independent ensembles.

Every standard normal pair is a pure function of ``(seed, trajectory_id, step_index,
mode_index)``: the 64-bit seed and the trajectory id are folded into a Threefry-2x32-20
key, and the pair ``(step_index, mode_index)`` is the counter.  Trajectories can therefore
be simulated in any order, in any batch partition, or skipped, without changing the
numbers any other trajectory sees.
"""

from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = ["NoiseIncrement", "threefry2x32", "trajectory_keys", "noise_increment", "gaussian_pairs"]

_M32 = np.uint64(0xFFFFFFFF)
_PARITY = np.uint64(0x1BD11BDA)


@nb.njit(inline="always")
def _round(x0, x1, r):
    x0 = (x0 + x1) & _M32
    x1 = (((x1 << np.uint64(r)) | (x1 >> np.uint64(32 - r))) & _M32) ^ x0
    return x0, x1


@nb.njit(inline="always")
def _threefry(k0, k1, c0, c1):
    k2 = _PARITY ^ k0 ^ k1
    x0 = (c0 + k0) & _M32
    x1 = (c1 + k1) & _M32
    x0, x1 = _round(x0, x1, 13)
    x0, x1 = _round(x0, x1, 15)
    x0, x1 = _round(x0, x1, 26)
    x0, x1 = _round(x0, x1, 6)
    x0 = (x0 + k1) & _M32
    x1 = (x1 + k2 + np.uint64(1)) & _M32
    x0, x1 = _round(x0, x1, 17)
    x0, x1 = _round(x0, x1, 29)
    x0, x1 = _round(x0, x1, 16)
    x0, x1 = _round(x0, x1, 24)
    x0 = (x0 + k2) & _M32
    x1 = (x1 + k0 + np.uint64(2)) & _M32
    x0, x1 = _round(x0, x1, 13)
    x0, x1 = _round(x0, x1, 15)
    x0, x1 = _round(x0, x1, 26)
    x0, x1 = _round(x0, x1, 6)
    x0 = (x0 + k0) & _M32
    x1 = (x1 + k1 + np.uint64(3)) & _M32
    x0, x1 = _round(x0, x1, 17)
    x0, x1 = _round(x0, x1, 29)
    x0, x1 = _round(x0, x1, 16)
    x0, x1 = _round(x0, x1, 24)
    x0 = (x0 + k1) & _M32
    x1 = (x1 + k2 + np.uint64(4)) & _M32
    x0, x1 = _round(x0, x1, 13)
    x0, x1 = _round(x0, x1, 15)
    x0, x1 = _round(x0, x1, 26)
    x0, x1 = _round(x0, x1, 6)
    x0 = (x0 + k2) & _M32
    x1 = (x1 + k0 + np.uint64(5)) & _M32
    return x0, x1


# Box-Muller with branch-free polynomial log and sincos (accurate to about one ulp), so
# that loops over trajectories vectorize; libm calls would not.
_LN2_HI = 0.6931471803691238
_LN2_LO = 1.9082149292705877e-10
_SQRT2 = 1.4142135623730951
_SQRT_HALF = 0.7071067811865476
_HALF_PI = 1.5707963267948966
_INV_2_30 = 9.313225746154785e-10


@nb.njit(inline="always")
def _log_u1(x0):
    """``log((x0 + 1) / 2**32)`` for a 32-bit word ``x0``."""
    m = np.float64(x0 + np.uint64(1))
    e = 0.0
    # binary normalisation m -> [1, 2) with float compares and exact power-of-two scalings
    b = np.float64(m >= 4294967296.0)
    m *= 1.0 - b * 0.9999999997671694
    e += 32.0 * b
    b = np.float64(m >= 65536.0)
    m *= 1.0 - b * 0.9999847412109375
    e += 16.0 * b
    b = np.float64(m >= 256.0)
    m *= 1.0 - b * 0.99609375
    e += 8.0 * b
    b = np.float64(m >= 16.0)
    m *= 1.0 - b * 0.9375
    e += 4.0 * b
    b = np.float64(m >= 4.0)
    m *= 1.0 - b * 0.75
    e += 2.0 * b
    b = np.float64(m >= 2.0)
    m *= 1.0 - b * 0.5
    e += b
    big = np.float64(m > _SQRT2)
    m = m * (1.0 - 0.5 * big)
    ef = e + big - 32.0
    t = (m - 1.0) / (m + 1.0)
    z = t * t
    p = 1.0 / 23.0
    p = p * z + 1.0 / 21.0
    p = p * z + 1.0 / 19.0
    p = p * z + 1.0 / 17.0
    p = p * z + 1.0 / 15.0
    p = p * z + 1.0 / 13.0
    p = p * z + 1.0 / 11.0
    p = p * z + 1.0 / 9.0
    p = p * z + 1.0 / 7.0
    p = p * z + 1.0 / 5.0
    p = p * z + 1.0 / 3.0
    return ef * _LN2_HI + (ef * _LN2_LO + 2.0 * t + 2.0 * t * z * p)


@nb.njit(inline="always")
def _sincos_turn(x1):
    """``(cos, sin)`` of ``2 pi x1 / 2**32`` for a 32-bit word ``x1``."""
    q = x1 >> np.uint64(30)
    odd = np.float64(q & np.uint64(1))
    sign = 1.0 - 2.0 * np.float64(q >> np.uint64(1))
    psi = (np.float64(x1 & np.uint64(0x3FFFFFFF)) * _INV_2_30 - 0.5) * _HALF_PI
    z = psi * psi
    sp = 1.0 / 355687428096000.0
    sp = -1.0 / 1307674368000.0 + z * sp
    sp = 1.0 / 6227020800.0 + z * sp
    sp = -1.0 / 39916800.0 + z * sp
    sp = 1.0 / 362880.0 + z * sp
    sp = -1.0 / 5040.0 + z * sp
    sp = 1.0 / 120.0 + z * sp
    sp = -1.0 / 6.0 + z * sp
    sn = psi + psi * z * sp
    cp = 1.0 / 6402373705728000.0
    cp = -1.0 / 20922789888000.0 + z * cp
    cp = 1.0 / 87178291200.0 + z * cp
    cp = -1.0 / 479001600.0 + z * cp
    cp = 1.0 / 3628800.0 + z * cp
    cp = -1.0 / 40320.0 + z * cp
    cp = 1.0 / 720.0 + z * cp
    cp = -1.0 / 24.0 + z * cp
    cp = 0.5 + z * cp
    cs = 1.0 - z * cp
    c = (cs - sn) * _SQRT_HALF  # rotate by pi/4 into the quadrant
    s = (cs + sn) * _SQRT_HALF
    return sign * (c - odd * (c + s)), sign * (s + odd * (c - s))


@nb.njit(inline="always")
def _box_muller(x0, x1):
    r = np.sqrt(-2.0 * _log_u1(x0))  # u1 = (x0 + 1) / 2**32 in (0, 1]
    c, s = _sincos_turn(x1)
    return r * c, r * s


@nb.njit(cache=True)
def _threefry_array(k0, k1, c0, c1):
    out0 = np.empty(c0.shape[0], dtype=np.uint64)
    out1 = np.empty(c0.shape[0], dtype=np.uint64)
    for i in range(c0.shape[0]):
        out0[i], out1[i] = _threefry(k0[i], k1[i], c0[i], c1[i])
    return out0, out1


def threefry2x32(key, counter):
    """Threefry-2x32 with 20 rounds; ``key`` and ``counter`` are pairs of 32-bit words.

    Broadcasts over leading axes; returns a ``(..., 2)`` array of ``uint64`` holding 32-bit
    words.
    """
    key = np.asarray(key, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    key, counter = np.broadcast_arrays(key, counter)
    shape = key.shape[:-1]
    k = key.reshape(-1, 2) & _M32
    c = counter.reshape(-1, 2) & _M32
    o0, o1 = _threefry_array(k[:, 0].copy(), k[:, 1].copy(), c[:, 0].copy(), c[:, 1].copy())
    return np.stack([o0, o1], axis=-1).reshape(shape + (2,))


def trajectory_keys(seed, trajectory_ids):
    """Per-trajectory Threefry keys: the trajectory id encrypted under the 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ids = np.asarray(trajectory_ids, dtype=np.uint64).reshape(-1)
    key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)
    ctr = np.stack([ids & _M32, ids >> np.uint64(32)], axis=-1)
    out = threefry2x32(key[None, :], ctr)
    return np.ascontiguousarray(out[:, 0]), np.ascontiguousarray(out[:, 1])


@nb.njit(cache=True, error_model="numpy")
def gaussian_pairs(key0, key1, step_index, modes):
    """Standard normal pairs ``(g+, g-)`` of shape ``(len(modes), n_traj)`` for one step."""
    n_traj = key0.shape[0]
    gp = np.empty((modes.shape[0], n_traj))
    gm = np.empty((modes.shape[0], n_traj))
    step = np.uint64(step_index)
    for a in range(modes.shape[0]):
        mode = np.uint64(modes[a])
        for b in range(n_traj):
            x0, x1 = _threefry(key0[b], key1[b], step, mode)
            gp[a, b], gm[a, b] = _box_muller(x0, x1)
    return gp, gm


@dataclass(frozen=True)
class NoiseIncrement:
    """Standard normal draws driving ``W_j`` (``gauss_plus``) and ``W_-j`` (``gauss_minus``)."""

    gauss_plus: np.ndarray
    gauss_minus: np.ndarray


def noise_increment(seed, trajectory_id, step_index, n_modes):
    """The normals used by trajectory ``trajectory_id`` at step ``step_index``."""
    k0, k1 = trajectory_keys(seed, [trajectory_id])
    gp, gm = gaussian_pairs(k0, k1, int(step_index), np.arange(n_modes, dtype=np.int64))
    return NoiseIncrement(gp[:, 0], gm[:, 0])
