# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Operation order matches the Python versions exactly; keep them in sync.
"""
from libc.math cimport exp, sqrt

import numpy as np


def absorb_stream(long long count, double mean, double ssd, values):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double x, delta
    for i in range(v.shape[0]):
        x = v[i]
        count += 1
        delta = x - mean
        mean += delta / <double>count
        ssd += delta * (x - mean)
        if ssd < 0.0:
            ssd = 0.0
    return count, mean, ssd


def absorb_masked(long long[::1] counts, double[::1] means, double[::1] ssds,
                  const double[::1] losses, const long long[::1] groups,
                  const unsigned char[::1] mask):
    cdef Py_ssize_t i, g
    cdef long long n
    cdef double x, mean, delta, ssd
    for i in range(losses.shape[0]):
        if not mask[i]:
            continue
        g = groups[i]
        x = losses[i]
        n = counts[g] + 1
        mean = means[g]
        delta = x - mean
        mean += delta / <double>n
        ssd = ssds[g] + delta * (x - mean)
        if ssd < 0.0:
            ssd = 0.0
        counts[g] = n
        means[g] = mean
        ssds[g] = ssd


cdef inline double _stddev(long long count, double ssd) nogil:
    if count < 2:
        return 0.0
    return sqrt(ssd / <double>(count - 1))


def stddev(long long count, double ssd):
    return _stddev(count, ssd)


def decide(const double[::1] losses, const long long[::1] groups,
           const long long[::1] counts, const double[::1] means,
           const double[::1] ssds, double alpha, long long min_count,
           double[::1] tau_out, unsigned char[::1] flag_out,
           double[::1] cand_out):
    cdef Py_ssize_t i, g
    cdef long long n
    cdef double x, tau
    for i in range(losses.shape[0]):
        g = groups[i]
        n = counts[g]
        x = losses[i]
        tau = means[g] + alpha * _stddev(n, ssds[g])
        tau_out[i] = tau
        if n >= min_count and tau > 0.0 and x > tau:
            flag_out[i] = 1
            cand_out[i] = exp(-((x - tau) / tau))
        else:
            flag_out[i] = 0
            cand_out[i] = 1.0
