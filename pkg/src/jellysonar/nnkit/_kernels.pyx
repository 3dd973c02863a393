# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution / pooling kernels (NHWC, float64).

Drop-in replacement for ``_kernels_py``; results are bit-identical because
the accumulation order in ``col2im`` matches the NumPy version.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def im2col(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = h + 2 * ph - kh + 1, wo = w + 2 * pw - kw + 1
    out = np.zeros((n, ho, wo, kh, kw, c), dtype=np.float64)
    cdef double[:, :, :, :, :, ::1] cols = out
    cdef Py_ssize_t b, oi, oj, i, j, ch, si, sj
    with nogil:
        for b in range(n):
            for oi in range(ho):
                for oj in range(wo):
                    for i in range(kh):
                        si = oi + i - ph
                        if si < 0 or si >= h:
                            continue
                        for j in range(kw):
                            sj = oj + j - pw
                            if sj < 0 or sj >= w:
                                continue
                            for ch in range(c):
                                cols[b, oi, oj, i, j, ch] = x[b, si, sj, ch]
    return out


def col2im(const double[:, :, :, :, :, ::1] cols, Py_ssize_t h, Py_ssize_t w, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t n = cols.shape[0], ho = cols.shape[1], wo = cols.shape[2]
    cdef Py_ssize_t kh = cols.shape[3], kw = cols.shape[4], c = cols.shape[5]
    out = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] x = out
    cdef Py_ssize_t b, oi, oj, i, j, ch, si, sj
    # (i, j) outermost per image to match the NumPy accumulation order
    with nogil:
        for b in range(n):
            for i in range(kh):
                for j in range(kw):
                    for oi in range(ho):
                        si = oi + i - ph
                        if si < 0 or si >= h:
                            continue
                        for oj in range(wo):
                            sj = oj + j - pw
                            if sj < 0 or sj >= w:
                                continue
                            for ch in range(c):
                                x[b, si, sj, ch] += cols[b, oi, oj, i, j, ch]
    return out


def maxpool2_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = h // 2, wo = w // 2
    out_arr = np.empty((n, ho, wo, c), dtype=np.float64)
    arg_arr = np.empty((n, ho, wo, c), dtype=np.int8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef signed char[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, i, j, ch
    cdef double best, v
    cdef signed char k
    with nogil:
        for b in range(n):
            for i in range(ho):
                for j in range(wo):
                    for ch in range(c):
                        best = x[b, 2 * i, 2 * j, ch]
                        k = 0
                        v = x[b, 2 * i, 2 * j + 1, ch]
                        if v > best:
                            best = v
                            k = 1
                        v = x[b, 2 * i + 1, 2 * j, ch]
                        if v > best:
                            best = v
                            k = 2
                        v = x[b, 2 * i + 1, 2 * j + 1, ch]
                        if v > best:
                            best = v
                            k = 3
                        out[b, i, j, ch] = best
                        arg[b, i, j, ch] = k
    return out_arr, arg_arr


def maxpool2_backward(const double[:, :, :, ::1] dout, const signed char[:, :, :, ::1] arg):
    cdef Py_ssize_t n = dout.shape[0], ho = dout.shape[1], wo = dout.shape[2], c = dout.shape[3]
    dx_arr = np.zeros((n, 2 * ho, 2 * wo, c), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, i, j, ch
    cdef signed char k
    with nogil:
        for b in range(n):
            for i in range(ho):
                for j in range(wo):
                    for ch in range(c):
                        k = arg[b, i, j, ch]
                        dx[b, 2 * i + k // 2, 2 * j + k % 2, ch] = dout[b, i, j, ch]
    return dx_arr
