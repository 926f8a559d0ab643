"""Pure-Python greedy assignment kernel.

Fallback twin of the compiled kernel in ``_matchcore.pyx``; both must
implement identical semantics (same comparisons, same tie-breaks) so the
backend choice can never change a result.
"""

from __future__ import annotations

import numpy as np


def greedy_assign(pred_xy: np.ndarray, order: np.ndarray, gt_xy: np.ndarray, max_dist: float) -> np.ndarray:
    """Assign each prediction (visited in ``order``) to its nearest unmatched
    ground-truth box within ``max_dist`` (BEV distance, boundary inclusive).

    Returns an int64 array of gt indices per prediction, -1 when unmatched.
    Equidistant candidates resolve to the lowest gt index.
    """
    n_pred = pred_xy.shape[0]
    n_gt = gt_xy.shape[0]
    assigned = np.full(n_pred, -1, dtype=np.int64)
    taken = [False] * n_gt
    limit = float(max_dist) * float(max_dist)
    for i in order:
        px = float(pred_xy[i, 0])
        py = float(pred_xy[i, 1])
        best = -1
        best_d2 = 0.0
        for j in range(n_gt):
            if taken[j]:
                continue
            dx = px - float(gt_xy[j, 0])
            dy = py - float(gt_xy[j, 1])
            d2 = dx * dx + dy * dy
            if best < 0 or d2 < best_d2:
                best = j
                best_d2 = d2
        if best >= 0 and best_d2 <= limit:
            assigned[i] = best
            taken[best] = True
    return assigned
