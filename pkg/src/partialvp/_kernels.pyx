# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled direct-summation Coulomb kernel.

Targets are processed in tiles that stay resident in L1; the innermost loop
runs over the targets of one tile for a fixed source, so each target owns its
accumulator and the loop vectorises without reassociating any sum. Every
accumulator is Kahan-compensated, which keeps the result independent of tile
size and close to correctly rounded.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    TILE = 512


cdef void _tile(const double* tx, const double* ty, const double* tz, Py_ssize_t nt,
                const double* sx, const double* sy, const double* sz, const double* sq,
                Py_ssize_t ns, double eps2,
                double* ex, double* ey, double* ez, double* phi) noexcept nogil:
    cdef double sex[TILE]
    cdef double sey[TILE]
    cdef double sez[TILE]
    cdef double sph[TILE]
    cdef double cex[TILE]
    cdef double cey[TILE]
    cdef double cez[TILE]
    cdef double cph[TILE]
    cdef Py_ssize_t i, j
    cdef double xj, yj, zj, qj, dx, dy, dz, r2, zero, inv, inv3, term, y, t

    for i in range(nt):
        sex[i] = 0.0
        sey[i] = 0.0
        sez[i] = 0.0
        sph[i] = 0.0
        cex[i] = 0.0
        cey[i] = 0.0
        cez[i] = 0.0
        cph[i] = 0.0

    for j in range(ns):
        xj = sx[j]
        yj = sy[j]
        zj = sz[j]
        qj = sq[j]
        for i in range(nt):
            dx = tx[i] - xj
            dy = ty[i] - yj
            dz = tz[i] - zj
            r2 = dx * dx + dy * dy + dz * dz + eps2
            # coincident points with zero softening contribute nothing;
            # branch-free so the loop stays vectorisable, exact for r2 > 0
            zero = r2 == 0.0
            inv = (1.0 - zero) / sqrt(r2 + zero)
            inv3 = qj * inv * inv * inv

            term = inv3 * dx
            y = term - cex[i]
            t = sex[i] + y
            cex[i] = (t - sex[i]) - y
            sex[i] = t

            term = inv3 * dy
            y = term - cey[i]
            t = sey[i] + y
            cey[i] = (t - sey[i]) - y
            sey[i] = t

            term = inv3 * dz
            y = term - cez[i]
            t = sez[i] + y
            cez[i] = (t - sez[i]) - y
            sez[i] = t

            term = qj * inv
            y = term - cph[i]
            t = sph[i] + y
            cph[i] = (t - sph[i]) - y
            sph[i] = t

    for i in range(nt):
        ex[i] = sex[i]
        ey[i] = sey[i]
        ez[i] = sez[i]
        phi[i] = sph[i]


def coulomb_field(double[::1] tx, double[::1] ty, double[::1] tz,
                  double[::1] sx, double[::1] sy, double[::1] sz, double[::1] sq,
                  double eps2):
    """Softened field and potential of point charges ``sq`` at the targets.

    Returns ``(ex, ey, ez, phi)`` as new float64 arrays.
    """
    cdef Py_ssize_t nt = tx.shape[0]
    cdef Py_ssize_t ns = sx.shape[0]
    if ty.shape[0] != nt or tz.shape[0] != nt:
        raise ValueError("target component arrays differ in length")
    if sy.shape[0] != ns or sz.shape[0] != ns or sq.shape[0] != ns:
        raise ValueError("source arrays differ in length")

    ex_a = np.zeros(nt)
    ey_a = np.zeros(nt)
    ez_a = np.zeros(nt)
    ph_a = np.zeros(nt)
    cdef double[::1] ex = ex_a
    cdef double[::1] ey = ey_a
    cdef double[::1] ez = ez_a
    cdef double[::1] ph = ph_a
    cdef Py_ssize_t start, n
    if nt == 0 or ns == 0:
        return ex_a, ey_a, ez_a, ph_a

    with nogil:
        start = 0
        while start < nt:
            n = TILE if nt - start > TILE else nt - start
            _tile(&tx[start], &ty[start], &tz[start], n,
                  &sx[0], &sy[0], &sz[0], &sq[0], ns, eps2,
                  &ex[start], &ey[start], &ez[start], &ph[start])
            start += n
    return ex_a, ey_a, ez_a, ph_a
