# cython: language_level=3
"""Compiled kernels mirroring ``_pykernels``.

Operation order inside each loop body matches the numpy fallback exactly
(compiled with -ffp-contract=off), so results are bitwise identical.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _garrote(double x, double th) nogil:
    cdef double a, q, v
    a = x if x >= 0.0 else -x
    if a > 0.0:
        q = th / a
        v = a * (1.0 - q * q)
        if not (v > 0.0):
            v = 0.0
        return -v if x < 0.0 else v
    return 0.0


def garrote(d, double th):
    cdef const double[::1] dv = np.ascontiguousarray(d, dtype=np.float64).ravel()
    cdef Py_ssize_t n = dv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _garrote(dv[i], th)
    return out.reshape(np.shape(d))


def pure_terms(s, d, grid):
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], m = gv.shape[0], i, j
    cdef double th, di, si, dm, dp, f1, f2, f3, acc
    out = np.empty((m, n))
    cdef double[:, ::1] ov = out
    with nogil:
        for j in range(m):
            th = gv[j]
            for i in range(n):
                di = dv[i]
                si = sv[i]
                dm = di - 1.0
                dp = di + 1.0
                f1 = _garrote(di, th) - di
                f2 = _garrote(dm, th) - dm
                f3 = _garrote(dp, th) - dp
                acc = si + f1 * f1
                acc = acc + (2.0 * di) * f1
                acc = acc - (si + di) * f2
                acc = acc + (si - di) * f3
                ov[j, i] = acc
    return out


def pure_profile(s, d, grid):
    return np.sum(pure_terms(s, d, grid), axis=1)


def decompose(y, int levels):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], i, j, h
    cdef int lev
    # level-major scratch, transposed on return
    sums_t = np.empty((levels, n))
    diffs_t = np.empty((levels, n))
    cdef double[:, ::1] sv = sums_t
    cdef double[:, ::1] dv = diffs_t
    cdef const double[::1] prev
    with nogil:
        for i in range(n):
            j = i + 1
            if j >= n:
                j -= n
            sv[0, i] = yv[i] + yv[j]
            dv[0, i] = yv[i] - yv[j]
        for lev in range(1, levels):
            h = (<Py_ssize_t>1) << lev
            for i in range(n):
                j = (i + h) % n
                sv[lev, i] = sv[lev - 1, i] + sv[lev - 1, j]
                dv[lev, i] = sv[lev - 1, i] - sv[lev - 1, j]
    return np.ascontiguousarray(sums_t.T), np.ascontiguousarray(diffs_t.T)


def reconstruct(coarse, tdiffs, bint clamp):
    cdef const double[::1] cv = np.ascontiguousarray(coarse, dtype=np.float64)
    td_t = np.ascontiguousarray(np.asarray(tdiffs, dtype=np.float64).T)
    cdef const double[:, ::1] tv = td_t
    cdef Py_ssize_t n = cv.shape[0], i, j, h
    cdef int levels = tv.shape[0], lev
    r = np.empty(n)
    nxt = np.empty(n)
    cdef double[::1] rv = r
    cdef double[::1] xv = nxt
    cdef double v
    with nogil:
        lev = levels - 1
        h = ((<Py_ssize_t>1) << lev) % n
        for i in range(n):
            j = i - h
            if j < 0:
                j += n
            rv[i] = (cv[i] + tv[lev, i] + (cv[j] - tv[lev, j])) / 2.0 / 2.0
        for lev in range(levels - 2, -1, -1):
            h = ((<Py_ssize_t>1) << lev) % n
            for i in range(n):
                j = i - h
                if j < 0:
                    j += n
                v = (rv[i] + tv[lev, i] + (rv[j] - tv[lev, j])) / 2.0 / 2.0
                if clamp and not (v > 0.0):
                    v = 0.0
                xv[i] = v
            for i in range(n):
                rv[i] = xv[i]
    return r
