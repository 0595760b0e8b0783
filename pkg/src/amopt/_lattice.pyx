# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CRR roll-back kernel. Mirrors ``_lattice_py`` exactly."""
from libc.math cimport pow
from libc.stdlib cimport malloc, free

import numpy as np


cdef double _rollback(double spot, double strike, double u, double p, double disc,
                      Py_ssize_t n, bint is_call, bint american,
                      double* vals, double* upow) noexcept nogil:
    cdef Py_ssize_t k, t, i
    cdef double s, c, ex, q = 1.0 - p
    # upow[k] = u**(k - n)
    for k in range(2 * n + 1):
        upow[k] = pow(u, <double>(k - n))
    for i in range(n + 1):
        s = spot * upow[2 * n - 2 * i]
        ex = s - strike if is_call else strike - s
        vals[i] = ex if ex > 0.0 else 0.0
    for t in range(n - 1, -1, -1):
        for i in range(t + 1):
            c = disc * (p * vals[i] + q * vals[i + 1])
            if american:
                s = spot * upow[n + t - 2 * i]
                ex = s - strike if is_call else strike - s
                if ex > c:
                    c = ex
            vals[i] = c
    return vals[0]


def rollback(double spot, double strike, double u, double p, double disc,
             Py_ssize_t steps, bint is_call, bint american):
    """Root value of a CRR lattice with ``steps`` levels."""
    cdef double* vals = <double*> malloc((steps + 1) * sizeof(double))
    cdef double* upow = <double*> malloc((2 * steps + 1) * sizeof(double))
    cdef double out
    if vals == NULL or upow == NULL:
        free(vals)
        free(upow)
        raise MemoryError()
    try:
        with nogil:
            out = _rollback(spot, strike, u, p, disc, steps, is_call, american, vals, upow)
    finally:
        free(vals)
        free(upow)
    return out


def rollback_many(double[::1] spot, double[::1] strike, double[::1] u, double[::1] p,
                  double[::1] disc, long[::1] steps, bint is_call, bint american):
    """Vectorised ``rollback`` over equal-length parameter arrays."""
    cdef Py_ssize_t m = spot.shape[0], j, nmax = 0
    for j in range(m):
        if steps[j] > nmax:
            nmax = steps[j]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double* vals = <double*> malloc((nmax + 1) * sizeof(double))
    cdef double* upow = <double*> malloc((2 * nmax + 1) * sizeof(double))
    if vals == NULL or upow == NULL:
        free(vals)
        free(upow)
        raise MemoryError()
    try:
        with nogil:
            for j in range(m):
                out[j] = _rollback(spot[j], strike[j], u[j], p[j], disc[j], steps[j],
                                   is_call, american, vals, upow)
    finally:
        free(vals)
        free(upow)
    return out_arr
