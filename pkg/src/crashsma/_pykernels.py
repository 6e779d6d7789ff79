"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx``. The elementwise
arithmetic is written in the same operation order in both so that the two
backends agree bit for bit; only the reduction in :func:`pure_profile` is
shared (``np.sum`` over rows).
"""

import numpy as np


def rotate(x, k):
    """Circular shift: positive ``k`` rotates right, negative rotates left."""
    n = x.shape[0]
    if n == 0:
        return x.copy()
    k %= n
    if k == 0:
        return x.copy()
    return np.concatenate((x[n - k:], x[: n - k]))


def garrote(d, th):
    """Continuous (non-negative garrote) threshold of an array of differences."""
    d = np.asarray(d, dtype=np.float64)
    a = np.abs(d)
    out = np.zeros_like(d)
    nz = a > 0
    with np.errstate(over="ignore"):  # subnormal |d| gives -inf, clipped below
        q = th / a[nz]
        v = a[nz] * (1.0 - q * q)
    v = np.maximum(v, 0.0)
    out[nz] = np.where(d[nz] < 0, -v, v)
    return out


def pure_terms(s, d, grid):
    """Per-element PURE summands for every threshold in ``grid`` (shape grid x n)."""
    s = np.asarray(s, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    out = np.empty((len(grid), s.shape[0]))
    dm = d - 1.0
    dp = d + 1.0
    spd = s + d
    smd = s - d
    d2 = 2.0 * d
    for j, th in enumerate(grid):
        f1 = garrote(d, th) - d
        f2 = garrote(dm, th) - dm
        f3 = garrote(dp, th) - dp
        out[j] = s + f1 * f1 + d2 * f1 - spd * f2 + smd * f3
    return out


def pure_profile(s, d, grid):
    return np.sum(pure_terms(s, d, grid), axis=1)


def decompose(y, levels):
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    sums = np.empty((n, levels))
    diffs = np.empty((n, levels))
    prev = y
    for lev in range(levels):
        h = 1 << lev
        nxt = rotate(prev, -h)
        sums[:, lev] = prev + nxt
        diffs[:, lev] = prev - nxt
        prev = sums[:, lev]
    return sums, diffs


def reconstruct(coarse, tdiffs, clamp):
    coarse = np.asarray(coarse, dtype=np.float64)
    tdiffs = np.asarray(tdiffs, dtype=np.float64)
    levels = tdiffs.shape[1]
    td = tdiffs[:, levels - 1]
    r = (coarse + td + rotate(coarse - td, 1 << (levels - 1))) / 2.0 / 2.0
    for lev in range(levels - 2, -1, -1):
        td = tdiffs[:, lev]
        r = (r + td + rotate(r - td, 1 << lev)) / 2.0 / 2.0
        if clamp:
            r = np.maximum(r, 0.0)
    return r
