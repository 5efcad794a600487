# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled batch kernels.

Same contract as _fallback.py: log-domain weights plus Gumbel draws, ties
to the lowest index, prices b_runner * exp(logscore gap).  Winners match
the fallback exactly; prices agree up to the last-ulp rounding of exp().
"""

from libc.math cimport exp, INFINITY
from libc.stdlib cimport free, malloc

import numpy as np

cimport numpy as cnp

cnp.import_array()


def single_outcomes(double[::1] logw, double[::1] b, double[:, ::1] eps):
    cdef Py_ssize_t m = eps.shape[0]
    cdef Py_ssize_t n = eps.shape[1]
    winners_arr = np.empty(m, dtype=np.int64)
    prices_arr = np.zeros(m, dtype=np.float64)
    cdef cnp.int64_t[::1] winners = winners_arr
    cdef double[::1] prices = prices_arr
    cdef Py_ssize_t i, j, w
    cdef double best, second, s
    for i in range(m):
        best = -INFINITY
        second = -INFINITY
        w = 0
        for j in range(n):
            s = logw[j] + eps[i, j]
            if s > best:
                second = best
                best = s
                w = j
            elif s > second:
                second = s
        if best == -INFINITY:
            winners[i] = -1
        else:
            winners[i] = w
            if second > -INFINITY:
                prices[i] = b[w] * exp(second - best)
    return winners_arr, prices_arr


def topk_outcomes(double[::1] logw, double[::1] b, double[:, ::1] eps,
                  Py_ssize_t k):
    cdef Py_ssize_t m = eps.shape[0]
    cdef Py_ssize_t n = eps.shape[1]
    cdef Py_ssize_t take = k + 1 if k < n else n
    top_arr = np.empty((m, k), dtype=np.int64)
    prices_arr = np.zeros((m, k), dtype=np.float64)
    cdef cnp.int64_t[:, ::1] top = top_arr
    cdef double[:, ::1] prices = prices_arr
    cdef double *logs = <double *> malloc(n * sizeof(double))
    cdef double *topls = <double *> malloc(k * sizeof(double))
    cdef unsigned char *used = <unsigned char *> malloc(n)
    if logs == NULL or topls == NULL or used == NULL:
        free(logs)
        free(topls)
        free(used)
        raise MemoryError()
    cdef Py_ssize_t i, j, t, idx
    cdef double kth
    try:
        for i in range(m):
            for j in range(n):
                logs[j] = logw[j] + eps[i, j]
                used[j] = 0
            kth = -INFINITY
            for t in range(take):
                idx = -1
                for j in range(n):
                    if used[j]:
                        continue
                    if idx == -1 or logs[j] > logs[idx]:
                        idx = j
                used[idx] = 1
                if t < k:
                    top[i, t] = idx
                    topls[t] = logs[idx]
                else:
                    kth = logs[idx]
            for t in range(k):
                if topls[t] > -INFINITY and kth > -INFINITY:
                    prices[i, t] = b[top[i, t]] * exp(kth - topls[t])
    finally:
        free(logs)
        free(topls)
        free(used)
    return top_arr, prices_arr


def session_without_replacement(double[::1] logw, double[:, :, ::1] eps,
                                double[::1] b):
    cdef Py_ssize_t m = eps.shape[0]
    cdef Py_ssize_t T = eps.shape[1]
    cdef Py_ssize_t n = eps.shape[2]
    winners_arr = np.empty((m, T), dtype=np.int64)
    prices_arr = np.zeros((m, T), dtype=np.float64)
    masked_arr = np.empty((m, n), dtype=np.float64)
    cdef cnp.int64_t[:, ::1] winners = winners_arr
    cdef double[:, ::1] prices = prices_arr
    cdef double[:, ::1] masked = masked_arr
    cdef Py_ssize_t i, j, t, w
    cdef double best, second, s
    for i in range(m):
        for j in range(n):
            masked[i, j] = logw[j]
    for t in range(T):
        for i in range(m):
            best = -INFINITY
            second = -INFINITY
            w = 0
            for j in range(n):
                s = masked[i, j] + eps[i, t, j]
                if s > best:
                    second = best
                    best = s
                    w = j
                elif s > second:
                    second = s
            if best == -INFINITY:
                winners[i, t] = -1
            else:
                winners[i, t] = w
                if second > -INFINITY:
                    prices[i, t] = b[w] * exp(second - best)
                masked[i, w] = -INFINITY
    return winners_arr, prices_arr


def rival_kth_logscore(double[::1] logw, double[:, ::1] eps, Py_ssize_t i,
                       Py_ssize_t k):
    cdef Py_ssize_t m = eps.shape[0]
    cdef Py_ssize_t n = eps.shape[1]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    if k > n - 1:
        out_arr.fill(-np.inf)
        return out_arr
    cdef double *vals = <double *> malloc(n * sizeof(double))
    cdef unsigned char *used = <unsigned char *> malloc(n)
    if vals == NULL or used == NULL:
        free(vals)
        free(used)
        raise MemoryError()
    cdef Py_ssize_t r, j, t, idx
    try:
        for r in range(m):
            for j in range(n):
                if j == i:
                    vals[j] = -INFINITY
                else:
                    vals[j] = logw[j] + eps[r, j]
                used[j] = 0
            idx = 0
            for t in range(k):
                idx = -1
                for j in range(n):
                    if used[j]:
                        continue
                    if idx == -1 or vals[j] > vals[idx]:
                        idx = j
                used[idx] = 1
            out[r] = vals[idx]
    finally:
        free(vals)
        free(used)
    return out_arr


def argmax_scores(double[::1] logw, double[:, ::1] eps):
    cdef Py_ssize_t m = eps.shape[0]
    cdef Py_ssize_t n = eps.shape[1]
    out_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i, j, w
    cdef double best, s
    for i in range(m):
        best = -INFINITY
        w = 0
        for j in range(n):
            s = logw[j] + eps[i, j]
            if s > best:
                best = s
                w = j
        out[i] = w
    return out_arr
