# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled registration kernels.

Single-pass twins of the functions in ``_kernels_py``; the arithmetic mirrors
the numpy versions operation for operation so the two backends agree to
floating-point identity.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def bilinear_warp(image, u_row, u_col):
    """Sample ``image`` at (r + u_row, c + u_col); edge-clamped bilinear."""
    cdef double[:, ::1] img = np.ascontiguousarray(image, dtype=np.float64)
    cdef double[:, ::1] ur = np.ascontiguousarray(u_row, dtype=np.float64)
    cdef double[:, ::1] uc = np.ascontiguousarray(u_col, dtype=np.float64)
    cdef Py_ssize_t n_r = img.shape[0]
    cdef Py_ssize_t n_c = img.shape[1]
    out_arr = np.empty((n_r, n_c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, r0, c0, r1, c1
    cdef double r, c, fr, fc, top, bot
    for i in range(n_r):
        for j in range(n_c):
            r = i + ur[i, j]
            if r < 0.0:
                r = 0.0
            elif r > n_r - 1:
                r = n_r - 1
            c = j + uc[i, j]
            if c < 0.0:
                c = 0.0
            elif c > n_c - 1:
                c = n_c - 1
            r0 = <Py_ssize_t>r
            c0 = <Py_ssize_t>c
            r1 = r0 + 1
            if r1 > n_r - 1:
                r1 = n_r - 1
            c1 = c0 + 1
            if c1 > n_c - 1:
                c1 = n_c - 1
            fr = r - r0
            fc = c - c0
            top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
            bot = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
            out[i, j] = top * (1.0 - fr) + bot * fr
    return out_arr


cdef inline double _grad_r(double[:, ::1] x, Py_ssize_t i, Py_ssize_t j,
                           Py_ssize_t n_r) noexcept:
    if i == 0:
        return x[1, j] - x[0, j]
    if i == n_r - 1:
        return x[n_r - 1, j] - x[n_r - 2, j]
    return (x[i + 1, j] - x[i - 1, j]) / 2.0


cdef inline double _grad_c(double[:, ::1] x, Py_ssize_t i, Py_ssize_t j,
                           Py_ssize_t n_c) noexcept:
    if j == 0:
        return x[i, 1] - x[i, 0]
    if j == n_c - 1:
        return x[i, n_c - 1] - x[i, n_c - 2]
    return (x[i, j + 1] - x[i, j - 1]) / 2.0


def demons_force(fixed, warped, double alpha):
    """Symmetric demons force field; see the numpy twin for the formula."""
    cdef double[:, ::1] fix = np.ascontiguousarray(fixed, dtype=np.float64)
    cdef double[:, ::1] wrp = np.ascontiguousarray(warped, dtype=np.float64)
    cdef Py_ssize_t n_r = fix.shape[0]
    cdef Py_ssize_t n_c = fix.shape[1]
    f_row_arr = np.empty((n_r, n_c), dtype=np.float64)
    f_col_arr = np.empty((n_r, n_c), dtype=np.float64)
    cdef double[:, ::1] f_row = f_row_arr
    cdef double[:, ::1] f_col = f_col_arr
    cdef Py_ssize_t i, j
    cdef double gf_r, gf_c, gw_r, gw_c, diff, pull, den_f, den_w, fr, fc
    for i in range(n_r):
        for j in range(n_c):
            gf_r = _grad_r(fix, i, j, n_r)
            gf_c = _grad_c(fix, i, j, n_c)
            gw_r = _grad_r(wrp, i, j, n_r)
            gw_c = _grad_c(wrp, i, j, n_c)
            diff = wrp[i, j] - fix[i, j]
            pull = alpha * (diff * diff)
            den_f = gf_r * gf_r + gf_c * gf_c + pull
            den_w = gw_r * gw_r + gw_c * gw_c + pull
            fr = 0.0
            fc = 0.0
            if den_f >= 1e-9:
                fr = (diff * gf_r) / den_f
                fc = (diff * gf_c) / den_f
            if den_w >= 1e-9:
                fr = fr + (diff * gw_r) / den_w
                fc = fc + (diff * gw_c) / den_w
            f_row[i, j] = fr
            f_col[i, j] = fc
    return f_row_arr, f_col_arr
