# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: spherical Bessel tables and screened Coulomb sums.

Semantics match ``_kernels_py`` exactly; see that module for the reference
implementation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, erf, erfc, floor, fabs, NAN

cnp.import_array()

cdef double TWO_OVER_SQRT_PI = 1.1283791670955126


cdef inline double _sph_bessel_one(int l, double x) noexcept nogil:
    cdef double term, total, half_x2, j0, j1, j2
    cdef int k
    if x < l + 1.0:
        term = 1.0
        for k in range(1, l + 1):
            term *= x / (2.0 * k + 1.0)
        total = term
        half_x2 = -0.5 * x * x
        k = 1
        while k < 200:
            term *= half_x2 / (k * (2.0 * l + 2.0 * k + 1.0))
            total += term
            if fabs(term) <= 1e-17 * fabs(total):
                break
            k += 1
        return total
    j0 = sin(x) / x
    if l == 0:
        return j0
    j1 = sin(x) / (x * x) - cos(x) / x
    for k in range(1, l):
        j2 = (2.0 * k + 1.0) / x * j1 - j0
        j0 = j1
        j1 = j2
    return j1


def sph_bessel(int l, x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xs
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _sph_bessel_one(l, xv[i])
    return out.reshape(np.shape(x))


cdef inline double _erf_over_r(double eta, double r) noexcept nogil:
    cdef double y = eta * r
    cdef double y2
    if y < 1e-3:
        y2 = y * y
        return TWO_OVER_SQRT_PI * eta * (1.0 - y2 / 3.0 + y2 * y2 / 10.0 - y2 * y2 * y2 / 42.0)
    return erf(y) / r


def screened_coulomb_sum(points, centers, charges, double L, double eta,
                         int nimg, int exclude):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
    cdef double[::1] z = np.ascontiguousarray(charges, dtype=np.float64).ravel()
    cdef Py_ssize_t npts = p.shape[0]
    cdef Py_ssize_t nc = c.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(npts, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef int a, b, e
    cdef double dx, dy, dz, ex, ey, ez, r, acc
    with nogil:
        for i in range(npts):
            acc = 0.0
            for j in range(nc):
                dx = p[i, 0] - c[j, 0]
                dy = p[i, 1] - c[j, 1]
                dz = p[i, 2] - c[j, 2]
                dx -= L * floor(dx / L + 0.5)
                dy -= L * floor(dy / L + 0.5)
                dz -= L * floor(dz / L + 0.5)
                for a in range(-nimg, nimg + 1):
                    ex = dx + a * L
                    for b in range(-nimg, nimg + 1):
                        ey = dy + b * L
                        for e in range(-nimg, nimg + 1):
                            ez = dz + e * L
                            r = sqrt(ex * ex + ey * ey + ez * ez)
                            if j == exclude and a == 0 and b == 0 and e == 0:
                                acc += z[j] * _erf_over_r(eta, r)
                            elif r == 0.0:
                                acc = NAN
                            else:
                                acc -= z[j] * erfc(eta * r) / r
            ov[i] = acc
    return out
