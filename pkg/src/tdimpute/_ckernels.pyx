# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: masked distances, kNN donor search, per-patient scans.

Semantics match ``_pykernels`` exactly; see that module for the contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, isfinite, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


def nan_euclidean(X, Y=None):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] B
    cdef bint symmetric = Y is None
    if symmetric:
        B = A
    else:
        B = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] ma = np.isfinite(A).astype(np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] mb = ma if symmetric else np.isfinite(B).astype(np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef Py_ssize_t i, j, c, j0
    cdef double acc, diff, val
    cdef int used
    for i in range(n):
        j0 = i if symmetric else 0
        for j in range(j0, m):
            acc = 0.0
            used = 0
            for c in range(d):
                if ma[i, c] & mb[j, c]:
                    diff = A[i, c] - B[j, c]
                    acc += diff * diff
                    used += 1
            if used == 0:
                val = INFINITY
            else:
                val = sqrt(acc * d / used)
            out[i, j] = val
            if symmetric:
                out[j, i] = val
    return out


def forward_fill_2d(values):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t t = v.shape[0], d = v.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = v.copy()
    cdef Py_ssize_t i, j
    cdef double carry
    for j in range(d):
        carry = NAN
        for i in range(t):
            if isfinite(out[i, j]):
                carry = out[i, j]
            else:
                out[i, j] = carry
    return out


def delta_2d(times, values):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(times, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t t = v.shape[0], d = v.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((t, d), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double prev
    for j in range(d):
        prev = -INFINITY
        for i in range(t):
            if isfinite(v[i, j]):
                out[i, j] = 0.0
                prev = s[i]
            else:
                out[i, j] = s[i] - prev
    return out


def knn_impute(X, int k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = x.copy()
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] obs = np.isfinite(x).astype(np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] col_means = np.empty(d, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kd = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] ki = np.empty(k, dtype=np.intp)
    cdef Py_ssize_t i, j, r, c, pos
    cdef double acc, diff, di, s
    cdef int used, nkept
    cdef bint any_missing

    for j in range(d):
        acc = 0.0
        used = 0
        for i in range(n):
            if obs[i, j]:
                acc += x[i, j]
                used += 1
        col_means[j] = acc / used if used > 0 else NAN

    for r in range(n):
        any_missing = False
        for j in range(d):
            if not obs[r, j]:
                any_missing = True
                break
        if not any_missing:
            continue
        for i in range(n):
            acc = 0.0
            used = 0
            for c in range(d):
                if obs[r, c] & obs[i, c]:
                    diff = x[r, c] - x[i, c]
                    acc += diff * diff
                    used += 1
            dist[i] = sqrt(acc * d / used) if used > 0 else INFINITY
        for j in range(d):
            if obs[r, j]:
                continue
            # insertion top-k over donors; strict compares keep the
            # lower-row-index donor ahead among distance ties
            nkept = 0
            for i in range(n):
                if not obs[i, j]:
                    continue
                di = dist[i]
                if di == INFINITY:
                    continue
                if nkept < k:
                    pos = nkept
                    while pos > 0 and kd[pos - 1] > di:
                        kd[pos] = kd[pos - 1]
                        ki[pos] = ki[pos - 1]
                        pos -= 1
                    kd[pos] = di
                    ki[pos] = i
                    nkept += 1
                elif di < kd[k - 1]:
                    pos = k - 1
                    while pos > 0 and kd[pos - 1] > di:
                        kd[pos] = kd[pos - 1]
                        ki[pos] = ki[pos - 1]
                        pos -= 1
                    kd[pos] = di
                    ki[pos] = i
            if nkept > 0:
                s = 0.0
                for pos in range(nkept):
                    s += x[ki[pos], j]
                out[r, j] = s / nkept
            else:
                out[r, j] = col_means[j]
    return out
