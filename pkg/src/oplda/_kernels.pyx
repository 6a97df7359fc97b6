# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_kernels_py`` function by function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, isfinite, isnan, INFINITY, NAN

cnp.import_array()

DEF GRID_LO = -8.0
DEF GRID_HI = 8.0
DEF GRID_SIZE = 4001
DEF SMALL_G = 1e-8
DEF MAX_ITER = 100


cdef inline double _core(double z, double g) noexcept nogil:
    if fabs(g) < SMALL_G:
        return z + 0.5 * g * z * z
    return expm1(g * z) / g


cdef inline double _transform(double z, double g, double h) noexcept nogil:
    return _core(z, g) * exp(0.5 * h * z * z)


cdef inline double _derivative(double z, double g, double h) noexcept nogil:
    cdef double dcore
    if fabs(g) < SMALL_G:
        dcore = 1.0 + g * z
    else:
        dcore = exp(g * z)
    return (dcore + h * z * _core(z, g)) * exp(0.5 * h * z * z)


def gh_transform(z, double g, double h):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zz = np.ascontiguousarray(np.ravel(z), dtype=np.float64)
    cdef Py_ssize_t i, n = zz.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _transform(zz[i], g, h)
    return out.reshape(np.shape(z))


def gh_derivative(z, double g, double h):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zz = np.ascontiguousarray(np.ravel(z), dtype=np.float64)
    cdef Py_ssize_t i, n = zz.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _derivative(zz[i], g, h)
    return out.reshape(np.shape(z))


cdef double _solve(double x, double a, double b, double g, double h,
                   double[::1] zg, double[::1] yg, double[::1] dg) noexcept nogil:
    cdef double tol, lo, hi, z, r, d, step, s, dy, m0, m1, near, far, fa
    cdef Py_ssize_t k, lo_i, hi_i, mid
    cdef int it
    if isnan(x):
        return NAN
    if not isfinite(x):
        return x
    tol = 1e-8 * (fabs(x) if fabs(x) > 1.0 else 1.0)

    # first index with yg[k] >= x
    lo_i = 0
    hi_i = GRID_SIZE
    while lo_i < hi_i:
        mid = (lo_i + hi_i) // 2
        if yg[mid] < x:
            lo_i = mid + 1
        else:
            hi_i = mid
    k = lo_i

    if 0 < k < GRID_SIZE:
        lo = zg[k - 1]
        hi = zg[k]
        dy = yg[k] - yg[k - 1]
        s = (x - yg[k - 1]) / dy
        if not isfinite(s):
            s = 0.5
        m0 = dy / dg[k - 1]
        m1 = dy / dg[k]
        z = ((1 + 2 * s) * (1 - s) * (1 - s) * lo + s * (1 - s) * (1 - s) * m0
             + s * s * (3 - 2 * s) * hi + s * s * (s - 1) * m1)
        if not isfinite(z) or z < lo or z > hi:
            z = lo + s * (hi - lo)
    else:
        if k == 0:
            near = GRID_LO
        else:
            near = GRID_HI
        far = 2.0 * near
        for it in range(60):
            fa = a + b * _transform(far, g, h)
            if (k == 0 and fa > x) or (k != 0 and fa < x):
                near = far
                far *= 2.0
            else:
                break
        if k == 0:
            lo = far
            hi = near
        else:
            lo = near
            hi = far
        z = 0.5 * (near + far)

    for it in range(MAX_ITER):
        r = a + b * _transform(z, g, h) - x
        if fabs(r) <= tol:
            break
        if hi - lo <= 4e-16 * (fabs(z) if fabs(z) > 1.0 else 1.0):
            break
        if r > 0:
            hi = z
        else:
            lo = z
        d = b * _derivative(z, g, h)
        step = z - r / d
        if not isfinite(step) or step <= lo or step >= hi:
            step = 0.5 * (lo + hi)
        z = step
    return z


def gh_inverse(x, double a, double b, double g, double h):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xx = np.ascontiguousarray(np.ravel(x), dtype=np.float64)
    cdef Py_ssize_t i, n = xx.shape[0]
    zg_arr = np.linspace(GRID_LO, GRID_HI, GRID_SIZE)
    cdef double[::1] zg = zg_arr
    cdef double[::1] yg = np.empty(GRID_SIZE, dtype=np.float64)
    cdef double[::1] dg = np.empty(GRID_SIZE, dtype=np.float64)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(GRID_SIZE):
            yg[i] = a + b * _transform(zg[i], g, h)
            dg[i] = b * _derivative(zg[i], g, h)
        for i in range(n):
            o[i] = _solve(xx[i], a, b, g, h, zg, yg, dg)
    return out


def segment_sums(values, counts):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef long long[::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef Py_ssize_t i, j, pos = 0, m = c.shape[0]
    cdef double acc
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(c[i]):
                acc = acc + v[pos]
                pos += 1
            o[i] = acc
    return out
