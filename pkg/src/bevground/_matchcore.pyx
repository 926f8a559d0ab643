# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled greedy assignment kernel.

Hot inner loop of prediction/ground-truth matching: for every prediction,
visited in score order, find the nearest unmatched ground-truth box in the
BEV plane and claim it when within the distance threshold. Semantics are
kept bit-identical to the pure-Python twin in ``_matchpy``.
"""

import numpy as np


def greedy_assign(double[:, ::1] pred_xy, long long[::1] order, double[:, ::1] gt_xy, double max_dist):
    cdef Py_ssize_t n_pred = pred_xy.shape[0]
    cdef Py_ssize_t n_gt = gt_xy.shape[0]
    assigned_arr = np.full(n_pred, -1, dtype=np.int64)
    taken_arr = np.zeros(n_gt, dtype=np.uint8)
    cdef long long[::1] assigned = assigned_arr
    cdef unsigned char[::1] taken = taken_arr
    cdef double limit = max_dist * max_dist
    cdef Py_ssize_t k, i, j, best
    cdef double px, py, dx, dy, d2, best_d2

    for k in range(order.shape[0]):
        i = <Py_ssize_t> order[k]
        px = pred_xy[i, 0]
        py = pred_xy[i, 1]
        best = -1
        best_d2 = 0.0
        for j in range(n_gt):
            if taken[j]:
                continue
            dx = px - gt_xy[j, 0]
            dy = py - gt_xy[j, 1]
            d2 = dx * dx + dy * dy
            if best < 0 or d2 < best_d2:
                best = j
                best_d2 = d2
        if best >= 0 and best_d2 <= limit:
            assigned[i] = best
            taken[best] = 1
    return assigned_arr
