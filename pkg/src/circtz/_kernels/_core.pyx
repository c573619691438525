# cython: language_level=3
"""Compiled kernels: Hann-weighted moving average and Morlet coefficients.

Semantics match circtz._kernels._ref exactly (same formulas, same boundary
handling); only the inner loops are compiled.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport cos, exp, sin, sqrt, M_PI

cnp.import_array()


def hann_window(int window_hours):
    if window_hours % 2 != 0 or window_hours < 24:
        raise ValueError("window_hours must be even and >= 24")
    cdef int half = window_hours // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(window_hours + 1, dtype=np.float64)
    cdef int i
    for i in range(window_hours + 1):
        w[i] = 0.5 * (1.0 + cos(2.0 * M_PI * (i - half) / window_hours))
    return w


@cython.boundscheck(False)
@cython.wraparound(False)
def hann_weighted_mean(x, int window_hours):
    """Centered Hann-weighted moving average, weights renormalized at edges."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = hann_window(window_hours)
    cdef Py_ssize_t n = xa.shape[0]
    cdef int half = window_hours // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t t
    cdef int k, lo, hi
    cdef double num, den, wk
    for t in range(n):
        lo = -half
        if t + lo < 0:
            lo = -<int> t
        hi = half
        if t + hi > n - 1:
            hi = <int> (n - 1 - t)
        num = 0.0
        den = 0.0
        for k in range(lo, hi + 1):
            wk = w[k + half]
            num += wk * xa[t + k]
            den += wk
        out[t] = num / den
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def morlet_coefficients(
    x,
    double scale_hours,
    double bandwidth=1.5,
    double center_frequency=1.0,
    double radius_scales=4.0,
):
    """Valid-region Morlet coefficients; element m is W_{m+L}, L = round(4 s)."""
    if scale_hours <= 0:
        raise ValueError("scale_hours must be positive")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    cdef int half = <int> round(radius_scales * scale_hours)
    cdef int width = 2 * half + 1
    if n < width:
        raise ValueError(
            f"series of length {n} is shorter than the wavelet support {width}"
        )
    # conj(psi(k/s)) tabulated once
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pr = np.empty(width, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pi = np.empty(width, dtype=np.float64)
    cdef double norm = 1.0 / sqrt(M_PI * bandwidth)
    cdef int j
    cdef double u, env, phase
    for j in range(width):
        u = (j - half) / scale_hours
        env = norm * exp(-(u * u) / bandwidth)
        phase = 2.0 * M_PI * center_frequency * u
        pr[j] = env * cos(phase)
        pi[j] = -env * sin(phase)
    cdef Py_ssize_t nout = n - 2 * half
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(nout, dtype=np.complex128)
    cdef Py_ssize_t m
    cdef double sr, si, xv
    for m in range(nout):
        sr = 0.0
        si = 0.0
        for j in range(width):
            xv = xa[m + j]
            sr += xv * pr[j]
            si += xv * pi[j]
        out[m] = sr + 1j * si
    return out
