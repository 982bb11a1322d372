"""Compiled orbit kernels.

Every kernel loops over orbits independently, so results do not depend on
the number of worker threads.
"""
import numpy as np
from numba import njit, prange

MP, QUADRATIC, HENON, LOZI = 0, 1, 2, 3

CAT_MODULUS = (1 << 61) - 1


@njit(cache=True, inline="always")
def _step_1d(code, a, x):
    if code == MP:
        if x < 0.5:
            x = x + 2.0**a * x ** (1.0 + a)
            return 1.0 if x > 1.0 else x
        return 2.0 * x - 1.0
    # quadratic family 1 - a x^2
    x = 1.0 - a * x * x
    if x < -1.0:
        return -1.0
    return 1.0 if x > 1.0 else x


@njit(cache=True, parallel=True)
def orbits_1d(code, a, x0, n, burn_in):
    m = x0.shape[0]
    out = np.empty((m, n))
    for i in prange(m):
        x = x0[i]
        for _ in range(burn_in):
            x = _step_1d(code, a, x)
        for j in range(n):
            out[i, j] = x
            x = _step_1d(code, a, x)
    return out


@njit(cache=True, parallel=True)
def sums_1d(code, a, x0, shift, checkpoints, burn_in):
    """Ergodic sums of the coordinate minus ``shift`` at each checkpoint."""
    m = x0.shape[0]
    nc = checkpoints.shape[0]
    out = np.empty((m, nc))
    last = checkpoints[nc - 1]
    for i in prange(m):
        x = x0[i]
        for _ in range(burn_in):
            x = _step_1d(code, a, x)
        s = 0.0
        c = 0
        for j in range(last):
            s += x - shift
            x = _step_1d(code, a, x)
            while c < nc and checkpoints[c] == j + 1:
                out[i, c] = s
                c += 1
    return out


@njit(cache=True, parallel=True)
def orbits_2d(code, a, b, x0, n, burn_in, half_width):
    m = x0.shape[0]
    out = np.full((m, n, 2), np.nan)
    escaped_at = np.full(m, -1, dtype=np.int64)
    for i in prange(m):
        x = x0[i, 0]
        y = x0[i, 1]
        for j in range(burn_in + n):
            if abs(x) > half_width or abs(y) > half_width or not np.isfinite(x):
                escaped_at[i] = j - burn_in if j >= burn_in else 0
                break
            if j >= burn_in:
                out[i, j - burn_in, 0] = x
                out[i, j - burn_in, 1] = y
            if code == HENON:
                xn = 1.0 - a * x * x + y
            else:
                xn = 1.0 - a * abs(x) + y
            y = b * x
            x = xn
    return out, escaped_at


@njit(cache=True, parallel=True)
def cat_orbits(ix0, iy0, n, burn_in):
    m = ix0.shape[0]
    M = CAT_MODULUS
    out = np.empty((m, n, 2))
    inv = 1.0 / M
    for i in prange(m):
        x = ix0[i]
        y = iy0[i]
        for _ in range(burn_in):
            x, y = (2 * x + y) % M, (x + y) % M
        for j in range(n):
            out[i, j, 0] = x * inv
            out[i, j, 1] = y * inv
            x, y = (2 * x + y) % M, (x + y) % M
    return out


@njit(cache=True)
def window_max(values, k):
    """Largest sum of ``k`` consecutive entries (sliding recurrence).

    The running sum is recomputed from scratch every ``k`` windows, which
    keeps the total work O(N) and stops rounding drift from accumulating.
    """
    s = 0.0
    for j in range(k):
        s += values[j]
    best = s
    for j in range(k, values.shape[0]):
        if (j - k + 1) % k == 0:
            s = 0.0
            for i in range(j - k + 1, j + 1):
                s += values[i]
        else:
            s += values[j] - values[j - k]
        if s > best:
            best = s
    return best
