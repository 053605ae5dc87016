# cython: language_level=3
"""Compiled hot loops: confidence binning and the pairwise weighted-MMCE sum.

Semantics mirror ``_kernels_py`` exactly; summation runs in ascending sample
order in both so bin statistics are bit-identical across backends.
"""
import numpy as np
from libc.math cimport ceil, exp, fabs


def bin_stats(const double[::1] conf, const double[::1] correct, Py_ssize_t m_bins):
    cdef Py_ssize_t n = conf.shape[0]
    cdef Py_ssize_t i, b
    cdef double p, dm = <double>m_bins
    counts_arr = np.zeros(m_bins, dtype=np.int64)
    conf_arr = np.zeros(m_bins, dtype=np.float64)
    corr_arr = np.zeros(m_bins, dtype=np.float64)
    assign_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef double[::1] conf_sum = conf_arr
    cdef double[::1] corr_sum = corr_arr
    cdef long long[::1] assign = assign_arr
    for i in range(n):
        p = conf[i]
        b = <Py_ssize_t>ceil(p * dm) - 1
        if b < 0:
            b = 0
        elif b > m_bins - 1:
            b = m_bins - 1
        # p * M rounding can land one bin off the (b/M, (b+1)/M] rule
        while b > 0 and p <= b / dm:
            b -= 1
        while b < m_bins - 1 and p > (b + 1) / dm:
            b += 1
        assign[i] = b
        counts[b] += 1
        conf_sum[b] += p
        corr_sum[b] += correct[i]
    return counts_arr, conf_arr, corr_arr, assign_arr


def mmce_weighted(const double[::1] conf, const double[::1] correct, double width):
    cdef Py_ssize_t n = conf.shape[0]
    cdef Py_ssize_t i, j
    cdef double n_correct = 0.0, n_wrong, kij, d, acc_s, acc_dk, total = 0.0
    for i in range(n):
        n_correct += correct[i]
    n_wrong = n - n_correct
    s_arr = np.empty(n, dtype=np.float64)
    ds_arr = np.empty(n, dtype=np.float64)
    grad_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] s = s_arr
    cdef double[::1] ds = ds_arr
    cdef double[::1] grad = grad_arr
    for i in range(n):
        if correct[i] > 0.5:
            s[i] = (1.0 - conf[i]) / n_correct
            ds[i] = -1.0 / n_correct
        else:
            s[i] = -conf[i] / n_wrong
            ds[i] = -1.0 / n_wrong
    for i in range(n):
        acc_s = 0.0
        acc_dk = 0.0
        for j in range(n):
            d = conf[i] - conf[j]
            kij = exp(-fabs(d) / width)
            acc_s += s[j] * kij
            if d > 0.0:
                acc_dk -= s[j] * kij / width
            elif d < 0.0:
                acc_dk += s[j] * kij / width
        total += s[i] * acc_s
        grad[i] = 2.0 * ds[i] * acc_s + 2.0 * s[i] * acc_dk
    return total, grad_arr
