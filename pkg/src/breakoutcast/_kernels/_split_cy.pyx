# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-search kernel.

Bit-exact twin of ``_split_np.best_split``: the sort is numpy's stable
argsort, prefix sums accumulate in the same sequential order, and ties
are broken by the same strict comparisons, so both backends grow
identical trees from identical inputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def best_split(double[:, ::1] x_all, double[::1] y_all,
               cnp.int64_t[::1] idx, cnp.int64_t[::1] feats,
               long min_leaf, double l2):
    """See ``breakoutcast._kernels._split_np.best_split``."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t m = feats.shape[0]
    cdef double best_score = -np.inf
    cdef long best_feat = -1
    cdef double best_thr = 0.0
    if n < 2 * min_leaf:
        return False, best_feat, best_thr, best_score

    cdef cnp.ndarray[double, ndim=1] y_node = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] xs = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] cs = np.empty(n, dtype=np.float64)
    cdef double[::1] y_node_v = y_node
    cdef double[::1] xs_v = xs
    cdef double[::1] cs_v = cs
    cdef cnp.int64_t[::1] order_v
    cdef Py_ssize_t i, j, f
    cdef double acc, total, ls, rs, lc, rc, score, xcur, xnext

    for i in range(n):
        y_node_v[i] = y_all[idx[i]]

    for j in range(m):
        f = feats[j]
        for i in range(n):
            xs_v[i] = x_all[idx[i], f]
        order = np.argsort(xs, kind="stable")
        order_v = order
        if xs_v[order_v[0]] == xs_v[order_v[n - 1]]:
            continue
        with nogil:
            acc = 0.0
            for i in range(n):
                acc = acc + y_node_v[order_v[i]]
                cs_v[i] = acc
            total = cs_v[n - 1]
            for i in range(n - 1):
                xcur = xs_v[order_v[i]]
                xnext = xs_v[order_v[i + 1]]
                if xcur >= xnext:
                    continue
                lc = <double> (i + 1)
                rc = <double> (n - i - 1)
                if min_leaf > 1 and (lc < min_leaf or rc < min_leaf):
                    continue
                ls = cs_v[i]
                rs = total - ls
                score = ls * ls / (lc + l2) + rs * rs / (rc + l2)
                if score > best_score:
                    best_score = score
                    best_feat = <long> f
                    best_thr = xcur
    return best_feat >= 0, best_feat, best_thr, best_score
