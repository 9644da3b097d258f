# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport openmp
from cython.parallel import prange, threadid
from libc.math cimport exp, sqrt, M_PI, INFINITY

cdef extern from "_simd.h" nogil:
    void gs_exp_div(const double *x, double t, double *out, Py_ssize_t length)
    void gs_sigmoid_div(const double *x, double t, double *out, Py_ssize_t length)

cdef double SQRT_HALF_PI = sqrt(M_PI / 2.0)
# elements mapped per block; keeps each thread's buffer in L1/L2
cdef Py_ssize_t BLOCK_ELEMS = 4096


def local_scores(probs, labels):
    cdef double[:, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef Py_ssize_t[::1] lab = np.ascontiguousarray(labels, dtype=np.intp)
    cdef Py_ssize_t n = p.shape[0], k = p.shape[1], i, j, c
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double best, gap
    with nogil:
        for i in range(n):
            c = lab[i]
            best = -INFINITY
            for j in range(k):
                if j != c and p[i, j] > best:
                    best = p[i, j]
            gap = p[i, c] - best
            out[i] = SQRT_HALF_PI * gap if gap > 0.0 else 0.0
    return out_arr


def grid_means(inner, labels, temps, outer):
    cdef double[:, :, ::1] x = np.ascontiguousarray(inner, dtype=np.float64)
    cdef Py_ssize_t[::1] lab = np.ascontiguousarray(labels, dtype=np.intp)
    cdef double[::1] ts = np.ascontiguousarray(temps, dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], k = x.shape[2], g = ts.shape[0]
    cdef int use_softmax
    if outer == "sigmoid":
        use_softmax = 0
    elif outer == "softmax":
        use_softmax = 1
    else:
        raise ValueError(f"unknown outer map {outer!r}")

    # temperature-free preparation: softmax needs row-max shifted values and
    # the index of the best other class; sigmoid only (own, best other) pairs
    cdef Py_ssize_t width = k if use_softmax else 2
    prep_arr = np.empty((m, n, width))
    other_idx_arr = np.empty((m, n), dtype=np.intp)
    cdef double[:, :, ::1] prep = prep_arr
    cdef Py_ssize_t[:, ::1] other_idx = other_idx_arr
    cdef Py_ssize_t a, i, j, t, c, lo, cnt, o, bi, tid, blk
    cdef double best, top
    with nogil:
        for a in range(m):
            for i in range(n):
                c = lab[i]
                best = -INFINITY
                top = -INFINITY
                o = 0 if c != 0 else 1
                for j in range(k):
                    if x[a, i, j] > top:
                        top = x[a, i, j]
                    if j != c and x[a, i, j] > best:
                        best = x[a, i, j]
                        o = j
                other_idx[a, i] = o
                if use_softmax:
                    for j in range(k):
                        prep[a, i, j] = x[a, i, j] - top
                else:
                    prep[a, i, 0] = x[a, i, c]
                    prep[a, i, 1] = best

    cdef Py_ssize_t block = max(1, BLOCK_ELEMS // width)
    cdef Py_ssize_t nblocks = (n + block - 1) // block
    cdef int nthreads = max(1, openmp.omp_get_max_threads())
    buf_arr = np.empty((nthreads, block * width))
    cdef double[:, ::1] buf = buf_arr
    out_arr = np.empty((g, m))
    cdef double[:, ::1] out = out_arr
    cdef double s, comp, y, tmp, gap, denom
    for t in prange(g, nogil=True, schedule="static", num_threads=nthreads):
        tid = threadid()
        for a in range(m):
            # Neumaier-compensated sum over samples
            s = 0.0
            comp = 0.0
            for blk in range(nblocks):
                lo = blk * block
                cnt = min(block, n - lo)
                if use_softmax:
                    gs_exp_div(&prep[a, lo, 0], ts[t], &buf[tid, 0], cnt * k)
                else:
                    gs_sigmoid_div(&prep[a, lo, 0], ts[t], &buf[tid, 0], cnt * 2)
                for i in range(cnt):
                    bi = i * width
                    if use_softmax:
                        denom = 0.0
                        for j in range(k):
                            denom = denom + buf[tid, bi + j]
                        gap = buf[tid, bi + lab[lo + i]] / denom - buf[tid, bi + other_idx[a, lo + i]] / denom
                    else:
                        gap = buf[tid, bi] - buf[tid, bi + 1]
                    y = SQRT_HALF_PI * gap if gap > 0.0 else 0.0
                    tmp = s + y
                    if (s if s >= 0 else -s) >= (y if y >= 0 else -y):
                        comp = comp + ((s - tmp) + y)
                    else:
                        comp = comp + ((y - tmp) + s)
                    s = tmp
            out[t, a] = (s + comp) / n
    return out_arr
