# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled clustering kernels.  Same API as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def assign_labels(const double[:, ::1] X, const double[:, ::1] C):
    """Nearest centroid (lowest index on ties) and squared distance per row."""
    cdef Py_ssize_t n = X.shape[0], k = C.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, c, best
    cdef double acc, diff, best_d
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] lab = labels
    cdef double[::1] dd = dists
    with nogil:
        for i in range(n):
            best = 0
            best_d = INFINITY
            for c in range(k):
                acc = 0.0
                for j in range(d):
                    diff = X[i, j] - C[c, j]
                    acc = acc + diff * diff
                if acc < best_d:
                    best_d = acc
                    best = c
            lab[i] = best
            dd[i] = best_d
    return labels, dists


def silhouette_samples(const double[:, ::1] X, const cnp.int64_t[::1] labels, Py_ssize_t n_clusters):
    """Per-point silhouette; points in singleton clusters score 0."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, m, j, c
    cdef double acc, diff, a, b, mean_d
    sums_arr = np.zeros(n_clusters, dtype=np.float64)
    counts_arr = np.zeros(n_clusters, dtype=np.int64)
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double[::1] s = out
    for i in range(n):
        counts[labels[i]] += 1
    with nogil:
        for i in range(n):
            for c in range(n_clusters):
                sums[c] = 0.0
            for m in range(n):
                if m == i:
                    continue
                acc = 0.0
                for j in range(d):
                    diff = X[i, j] - X[m, j]
                    acc = acc + diff * diff
                sums[labels[m]] += sqrt(acc)
            c = labels[i]
            if counts[c] <= 1:
                s[i] = 0.0
                continue
            a = sums[c] / (counts[c] - 1)
            b = INFINITY
            for m in range(n_clusters):
                if m == c or counts[m] == 0:
                    continue
                mean_d = sums[m] / counts[m]
                if mean_d < b:
                    b = mean_d
            if b == INFINITY:
                s[i] = 0.0
            elif a < b:
                s[i] = (b - a) / b
            elif a > b:
                s[i] = (b - a) / a
            else:
                s[i] = 0.0
    return out


def complete_linkage(const double[:, ::1] X):
    """Complete-linkage merges via the nearest-neighbour chain.

    Returns an unsorted ``(n-1, 3)`` array of ``(slot_a, slot_b, distance)``
    where slots are leaf indices standing for the cluster last stored there;
    the merged cluster keeps slot ``min(a, b)``.
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k, a, b, prev, top, keep, drop, n_merges = 0
    cdef double acc, diff, best, v
    D_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] D = D_arr
    active_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] active = active_arr
    chain_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] chain = chain_arr
    merges = np.empty((max(n - 1, 0), 3), dtype=np.float64)
    cdef double[:, ::1] M = merges
    with nogil:
        for i in range(n):
            D[i, i] = INFINITY
            for k in range(i + 1, n):
                acc = 0.0
                for j in range(d):
                    diff = X[i, j] - X[k, j]
                    acc = acc + diff * diff
                D[i, k] = sqrt(acc)
                D[k, i] = D[i, k]
        top = 0
        while n_merges < n - 1:
            if top == 0:
                for i in range(n):
                    if active[i]:
                        chain[0] = i
                        top = 1
                        break
            while True:
                a = chain[top - 1]
                prev = chain[top - 2] if top >= 2 else -1
                if prev >= 0:
                    b = prev
                    best = D[a, prev]
                else:
                    b = -1
                    best = INFINITY
                for k in range(n):
                    if active[k] and k != a:
                        v = D[a, k]
                        if v < best:
                            best = v
                            b = k
                if b == prev:
                    break
                chain[top] = b
                top += 1
            top -= 2
            keep = a if a < b else b
            drop = b if a < b else a
            M[n_merges, 0] = keep
            M[n_merges, 1] = drop
            M[n_merges, 2] = best
            n_merges += 1
            active[drop] = 0
            for k in range(n):
                if active[k] and k != keep:
                    v = D[keep, k] if D[keep, k] > D[drop, k] else D[drop, k]
                    D[keep, k] = v
                    D[k, keep] = v
    return merges
