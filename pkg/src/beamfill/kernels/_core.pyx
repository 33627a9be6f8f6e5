# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled numeric kernels.

Reference semantics (and the full docstrings) live in ``_ref``; the two
modules must agree to float round-off.  Positions and alphabets are capped
at 32 and 64 respectively, far above the exact-backend sizes this kernel
exists for.
"""

from libc.math cimport INFINITY, exp, log

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef enum:
    MAX_POSITIONS = 32
    MAX_ALPHABET = 64


def logsumexp(values):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    return _logsumexp(v)


cdef double _logsumexp(const double[::1] v) noexcept:
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double m = -INFINITY
    cdef double s = 0.0
    for i in range(n):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


def marginal_logcond(table, obs, Py_ssize_t query, Py_ssize_t alphabet):
    cdef const double[::1] t = np.ascontiguousarray(table, dtype=np.float64)
    cdef const cnp.int64_t[::1] o = np.ascontiguousarray(obs, dtype=np.int64)
    if o.shape[0] > MAX_POSITIONS:
        raise ValueError("compiled kernel supports at most 32 positions")
    if alphabet > MAX_ALPHABET:
        raise ValueError("compiled kernel supports alphabets up to 64")
    if query < 0 or query >= o.shape[0]:
        raise ValueError("query position out of range")
    out = np.empty(alphabet, dtype=np.float64)
    cdef double[::1] ov = out
    _marginal_logcond(t, o, query, alphabet, ov)
    return out


cdef void _marginal_logcond(const double[::1] table, const cnp.int64_t[::1] obs,
                            Py_ssize_t query, Py_ssize_t A,
                            double[::1] out) noexcept:
    cdef Py_ssize_t n = obs.shape[0]
    cdef Py_ssize_t strides[MAX_POSITIONS]
    cdef Py_ssize_t free_stride[MAX_POSITIONS]
    cdef Py_ssize_t ctr[MAX_POSITIONS]
    cdef double vmax[MAX_ALPHABET]
    cdef double vsum[MAX_ALPHABET]
    cdef Py_ssize_t p, i, v, nfree, base, sq, idx, offset
    cdef double x, norm

    strides[n - 1] = 1
    for p in range(n - 2, -1, -1):
        strides[p] = strides[p + 1] * A

    base = 0
    nfree = 0
    for p in range(n):
        if p == query:
            continue
        if obs[p] >= 0:
            base += obs[p] * strides[p]
        else:
            free_stride[nfree] = strides[p]
            ctr[nfree] = 0
            nfree += 1
    sq = strides[query]

    for v in range(A):
        vmax[v] = -INFINITY
        vsum[v] = 0.0

    # Odometer over the free (marginalized) positions; running-max rescaling
    # keeps the per-value accumulators stable in one pass.
    offset = 0
    while True:
        idx = base + offset
        for v in range(A):
            x = table[idx + v * sq]
            if x <= vmax[v]:
                vsum[v] += exp(x - vmax[v])
            else:
                vsum[v] = vsum[v] * exp(vmax[v] - x) + 1.0
                vmax[v] = x
        i = nfree - 1
        while i >= 0:
            ctr[i] += 1
            if ctr[i] < A:
                offset += free_stride[i]
                break
            ctr[i] = 0
            offset -= free_stride[i] * (A - 1)
            i -= 1
        if i < 0:
            break

    for v in range(A):
        out[v] = vmax[v] + log(vsum[v])
    norm = _logsumexp(out)
    for v in range(A):
        out[v] -= norm
