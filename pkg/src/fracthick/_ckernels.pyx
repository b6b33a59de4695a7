# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see ``_pykernels`` for the reference versions."""

import numpy as np

from libc.math cimport cos, sin


def coherent_sum(const double[::1] nodes, const double complex[::1] amp,
                 const double[::1] xs, double inv_h):
    """``out[i] = sum_j amp[j] * exp(1j * xs[i] * nodes[j] * inv_h)``."""
    cdef Py_ssize_t nx = xs.shape[0]
    cdef Py_ssize_t nn = nodes.shape[0]
    out = np.empty(nx, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef Py_ssize_t i, j
    cdef double k, ph, c, s, re, im, ar, ai
    for i in range(nx):
        k = xs[i] * inv_h
        re = 0.0
        im = 0.0
        for j in range(nn):
            ph = k * nodes[j]
            c = cos(ph)
            s = sin(ph)
            ar = amp[j].real
            ai = amp[j].imag
            re += ar * c - ai * s
            im += ar * s + ai * c
        o[i] = re + 1j * im
    return out


def grid_min_mass(const double[::1] lo, const double[::1] hi, double L,
                  double x0, double step, Py_ssize_t count):
    """Minimum of ``2L - |K ∩ [x - L, x + L]|`` over ``x = x0 + k * step``.

    ``lo``/``hi`` must be sorted and disjoint.  Returns ``(mass, k)``.
    """
    cdef Py_ssize_t m = lo.shape[0]
    cdef Py_ssize_t k, i, first = 0
    cdef double x, a, b, covered, p, q, best = 1e300
    cdef Py_ssize_t best_k = 0
    for k in range(count):
        x = x0 + k * step
        a = x - L
        b = x + L
        while first < m and hi[first] <= a:
            first += 1
        covered = 0.0
        i = first
        while i < m and lo[i] < b:
            p = lo[i] if lo[i] > a else a
            q = hi[i] if hi[i] < b else b
            if q > p:
                covered += q - p
            i += 1
        if 2.0 * L - covered < best:
            best = 2.0 * L - covered
            best_k = k
    return best, best_k
