# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: batched 1D convolution and window-2 average pooling.

Same contracts as ``numpy_backend``; selected automatically at import when
the extension is built. Loops are arranged so the innermost dimension is
contiguous and free of bounds checks, which lets the C compiler vectorize.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t pad = (K - 1) // 2
    out = np.empty((B, Co, L), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t n, o, i, t, k, t0, t1, j
    cdef double wv, bo, acc
    if L < 8:
        # short sequences: accumulate each output element in a register
        for n in range(B):
            for o in range(Co):
                for t in range(L):
                    acc = b[o]
                    for i in range(Ci):
                        for k in range(K):
                            j = t + k - pad
                            if 0 <= j < L:
                                acc += w[o, i, k] * x[n, i, j]
                    y[n, o, t] = acc
        return out
    for n in range(B):
        for o in range(Co):
            bo = b[o]
            for t in range(L):
                y[n, o, t] = bo
            for i in range(Ci):
                for k in range(K):
                    wv = w[o, i, k]
                    # y[n,o,t] += wv * x[n,i,t+k-pad] where the x index is valid
                    t0 = pad - k
                    if t0 < 0:
                        t0 = 0
                    t1 = L + pad - k
                    if t1 > L:
                        t1 = L
                    for t in range(t0, t1):
                        y[n, o, t] += wv * x[n, i, t + k - pad]
    return out


def conv1d_backward(double[:, :, ::1] x, double[:, :, ::1] w,
                    double[:, :, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t pad = (K - 1) // 2
    gx_arr = np.zeros((B, Ci, L), dtype=np.float64)
    gw_arr = np.zeros((Co, Ci, K), dtype=np.float64)
    gb_arr = np.zeros(Co, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t n, o, i, t, k, t0, t1
    cdef double acc, wv
    for o in range(Co):
        acc = 0.0
        for n in range(B):
            for t in range(L):
                acc += gy[n, o, t]
        gb[o] = acc
        # gw[o,i,k] = sum_{n,t} gy[n,o,t] * x[n,i,t+k-pad]
        for i in range(Ci):
            for k in range(K):
                t0 = pad - k
                if t0 < 0:
                    t0 = 0
                t1 = L + pad - k
                if t1 > L:
                    t1 = L
                acc = 0.0
                for n in range(B):
                    for t in range(t0, t1):
                        acc += gy[n, o, t] * x[n, i, t + k - pad]
                gw[o, i, k] = acc
    # gx[n,i,j] = sum_{o,k} w[o,i,k] * gy[n,o,j+pad-k] (valid gy index)
    cdef Py_ssize_t j
    if L < 8:
        for n in range(B):
            for i in range(Ci):
                for j in range(L):
                    acc = 0.0
                    for o in range(Co):
                        for k in range(K):
                            t = j + pad - k
                            if 0 <= t < L:
                                acc += w[o, i, k] * gy[n, o, t]
                    gx[n, i, j] = acc
        return gx_arr, gw_arr, gb_arr
    for n in range(B):
        for i in range(Ci):
            for o in range(Co):
                for k in range(K):
                    wv = w[o, i, k]
                    t0 = k - pad
                    if t0 < 0:
                        t0 = 0
                    t1 = L + k - pad
                    if t1 > L:
                        t1 = L
                    for t in range(t0, t1):
                        gx[n, i, t] += wv * gy[n, o, t + pad - k]
    return gx_arr, gw_arr, gb_arr


def avgpool2_forward(double[:, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t M = L // 2
    out = np.empty((B, C, M), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t n, c, t
    for n in range(B):
        for c in range(C):
            for t in range(M):
                y[n, c, t] = 0.5 * (x[n, c, 2 * t] + x[n, c, 2 * t + 1])
    return out


def avgpool2_backward(double[:, :, ::1] gy, Py_ssize_t length):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1], M = gy.shape[2]
    out = np.zeros((B, C, length), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t n, c, t
    cdef double half
    for n in range(B):
        for c in range(C):
            for t in range(M):
                half = 0.5 * gy[n, c, t]
                gx[n, c, 2 * t] = half
                gx[n, c, 2 * t + 1] = half
    return out
