# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Volterra steppers; see ``_volterra_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def population(a_re, a_im, b_re, b_im, double omega, double dt, double y0, Py_ssize_t n_steps):
    cdef double[:, ::1] ar = np.ascontiguousarray(a_re, dtype=np.float64)
    cdef double[:, ::1] ai = np.ascontiguousarray(a_im, dtype=np.float64)
    cdef double[:, ::1] br = np.ascontiguousarray(b_re, dtype=np.float64)
    cdef double[:, ::1] bi = np.ascontiguousarray(b_im, dtype=np.float64)
    cdef Py_ssize_t n_h = ar.shape[0]
    out = np.empty(n_steps, dtype=np.float64)
    cdef double[::1] y = out
    cdef double[::1] arow = np.empty(n_steps, dtype=np.float64)
    cdef double[::1] ct = np.empty(n_h, dtype=np.float64)
    cdef double[::1] st = np.empty(n_h, dtype=np.float64)
    cdef Py_ssize_t i, j, n
    cdef double t1, half = 0.5 * dt, hist, src, bsum, bval, val, y_pred, f_pred
    cdef double f_prev = 0.0
    y[0] = y0
    for i in range(n_steps - 1):
        t1 = (i + 1) * dt
        for n in range(n_h):
            ct[n] = (1.0 if n == 0 else 2.0) * cos(n * omega * t1)
            st[n] = (1.0 if n == 0 else 2.0) * sin(n * omega * t1)
        bsum = 0.0
        for j in range(i + 2):
            val = 0.0
            bval = 0.0
            for n in range(n_h):
                val += ct[n] * ar[n, j] - st[n] * ai[n, j]
                bval += ct[n] * br[n, j] - st[n] * bi[n, j]
            arow[j] = val
            bsum += bval
            if j == 0 or j == i + 1:
                bsum -= 0.5 * bval
        src = dt * bsum
        hist = -half * arow[i + 1] * y[0]
        for j in range(i + 1):
            hist += dt * arow[i + 1 - j] * y[j]
        y_pred = y[i] + dt * f_prev
        f_pred = -(hist + half * arow[0] * y_pred) + src
        y[i + 1] = y[i] + half * (f_prev + f_pred)
        f_prev = -(hist + half * arow[0] * y[i + 1]) + src
    return out


def matrix(K, E, y0, double dt, Py_ssize_t n_steps):
    cdef double complex[:, :, ::1] k = np.ascontiguousarray(K, dtype=np.complex128)
    cdef double complex[:, ::1] e = np.ascontiguousarray(E, dtype=np.complex128)
    cdef Py_ssize_t d = e.shape[0]
    out = np.empty((n_steps, d), dtype=np.complex128)
    cdef double complex[:, ::1] y = out
    cdef double complex[::1] hist = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] m_prev = np.zeros(d, dtype=np.complex128)
    cdef double complex[::1] em = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] ey = np.empty(d, dtype=np.complex128)
    cdef double complex[::1] y_pred = np.empty(d, dtype=np.complex128)
    cdef Py_ssize_t i, j, a, b
    cdef double half = 0.5 * dt
    cdef double complex acc, acc2
    y0 = np.asarray(y0, dtype=np.complex128)
    for a in range(d):
        y[0, a] = y0[a]
    for i in range(n_steps - 1):
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc = acc - half * k[i + 1, a, b] * y[0, b]
            for j in range(i + 1):
                for b in range(d):
                    acc = acc + dt * k[i + 1 - j, a, b] * y[j, b]
            hist[a] = acc
        for a in range(d):
            acc = 0.0
            acc2 = 0.0
            for b in range(d):
                acc = acc + e[a, b] * m_prev[b]
                acc2 = acc2 + e[a, b] * y[i, b]
            em[a] = acc
            ey[a] = acc2
        for a in range(d):
            y_pred[a] = ey[a] + dt * em[a]
        for a in range(d):
            acc = hist[a]
            for b in range(d):
                acc = acc + half * k[0, a, b] * y_pred[b]
            y[i + 1, a] = ey[a] + half * (em[a] + acc)
        for a in range(d):
            acc = hist[a]
            for b in range(d):
                acc = acc + half * k[0, a, b] * y[i + 1, b]
            m_prev[a] = acc
    return out
