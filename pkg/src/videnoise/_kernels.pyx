# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: patch gather/scatter and exhaustive block matching.

Contracts are identical to the numpy fallback in ``_kernels_py``; buffers are
(h, w, m) float64 C-order arrays and patch vectors use the flat index
``d*n1*n2 + r*n2 + c``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

ctypedef cnp.int64_t i64


def gather_patches(double[:, :, ::1] buffer, i64[:] rows, i64[:] cols, int n1, int n2):
    cdef Py_ssize_t m = buffer.shape[2]
    cdef Py_ssize_t k = rows.shape[0]
    cdef Py_ssize_t n = n1 * n2 * m
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, d, r, c, idx, br, bc
    with nogil:
        for i in range(k):
            br = rows[i]
            bc = cols[i]
            idx = 0
            for d in range(m):
                for r in range(n1):
                    for c in range(n2):
                        out[idx, i] = buffer[br + r, bc + c, d]
                        idx += 1
    return out_arr


def gather_bm_patches(double[:, :, ::1] buffer, i64[:, :] planes, i64[:, :] rows,
                      i64[:, :] cols, int n1, int n2):
    cdef Py_ssize_t k = planes.shape[0]
    cdef Py_ssize_t m = planes.shape[1]
    cdef Py_ssize_t n = n1 * n2 * m
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, r, c, idx, br, bc, d
    with nogil:
        for i in range(k):
            idx = 0
            for j in range(m):
                br = rows[i, j]
                bc = cols[i, j]
                d = planes[i, j]
                for r in range(n1):
                    for c in range(n2):
                        out[idx, i] = buffer[br + r, bc + c, d]
                        idx += 1
    return out_arr


def deposit_patches(double[:, :, ::1] values, double[:, :, ::1] weights,
                    i64[:, :] planes, i64[:, :] rows, i64[:, :] cols,
                    double[:, ::1] patches, double[:] wts, int n1, int n2):
    cdef Py_ssize_t k = planes.shape[0]
    cdef Py_ssize_t m = planes.shape[1]
    cdef Py_ssize_t i, j, r, c, idx, br, bc, p
    cdef double w
    with nogil:
        for i in range(k):
            w = wts[i]
            idx = 0
            for j in range(m):
                p = planes[i, j]
                if p < 0:
                    idx += n1 * n2
                    continue
                br = rows[i, j]
                bc = cols[i, j]
                for r in range(n1):
                    for c in range(n2):
                        values[br + r, bc + c, p] += w * patches[idx, i]
                        weights[br + r, bc + c, p] += w
                        idx += 1


def block_match(double[:, :, ::1] buffer, i64[:] ref_rows, i64[:] ref_cols,
                int n1, int n2, int dr, int dc, int mid):
    cdef Py_ssize_t h = buffer.shape[0]
    cdef Py_ssize_t w = buffer.shape[1]
    cdef Py_ssize_t m = buffer.shape[2]
    cdef Py_ssize_t k = ref_rows.shape[0]
    rows_arr = np.empty((k, m), dtype=np.int64)
    cols_arr = np.empty((k, m), dtype=np.int64)
    d2_arr = np.empty((k, m), dtype=np.float64)
    cdef i64[:, ::1] out_rows = rows_arr
    cdef i64[:, ::1] out_cols = cols_arr
    cdef double[:, ::1] out_d2 = d2_arr
    cdef Py_ssize_t i, d, pr, pc, a, b, rr, rc
    cdef Py_ssize_t r_lo, r_hi, c_lo, c_hi, best_r, best_c
    cdef double s, diff, best_d2
    cdef i64 disp, best_disp
    with nogil:
        for i in range(k):
            rr = ref_rows[i]
            rc = ref_cols[i]
            r_lo = rr - dr
            if r_lo < 0:
                r_lo = 0
            r_hi = rr + dr
            if r_hi > h - n1:
                r_hi = h - n1
            c_lo = rc - dc
            if c_lo < 0:
                c_lo = 0
            c_hi = rc + dc
            if c_hi > w - n2:
                c_hi = w - n2
            for d in range(m):
                if d == mid:
                    out_rows[i, d] = rr
                    out_cols[i, d] = rc
                    out_d2[i, d] = 0.0
                    continue
                best_d2 = INFINITY
                best_disp = 0
                best_r = rr
                best_c = rc
                for pr in range(r_lo, r_hi + 1):
                    for pc in range(c_lo, c_hi + 1):
                        s = 0.0
                        for a in range(n1):
                            for b in range(n2):
                                diff = buffer[pr + a, pc + b, d] - buffer[rr + a, rc + b, mid]
                                s += diff * diff
                        disp = (pr - rr) * (pr - rr) + (pc - rc) * (pc - rc)
                        if s < best_d2 or (s == best_d2 and disp < best_disp):
                            best_d2 = s
                            best_disp = disp
                            best_r = pr
                            best_c = pc
                out_rows[i, d] = best_r
                out_cols[i, d] = best_c
                out_d2[i, d] = best_d2
    return rows_arr, cols_arr, d2_arr
