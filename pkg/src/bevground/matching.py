"""Backend selection for the greedy matching kernel.

The compiled kernel is used when its extension module imported cleanly;
otherwise the pure-Python twin takes over. Setting ``BEVGROUND_PURE_KERNELS=1``
forces the pure backend (used by the benchmark and the cross-check tests).
Both backends implement identical semantics, so the choice is invisible to
callers apart from speed.
"""

from __future__ import annotations

import os

import numpy as np

from . import _matchpy

if os.environ.get("BEVGROUND_PURE_KERNELS") == "1":
    _impl = _matchpy.greedy_assign
    BACKEND = "pure"
else:
    try:
        from . import _matchcore

        _impl = _matchcore.greedy_assign
        BACKEND = "compiled"
    except ImportError:
        _impl = _matchpy.greedy_assign
        BACKEND = "pure"


def score_order(scores: np.ndarray) -> np.ndarray:
    """Descending-score visit order; equal scores keep input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable").astype(np.int64)


def greedy_assign(pred_xy: np.ndarray, order: np.ndarray, gt_xy: np.ndarray, max_dist: float) -> np.ndarray:
    pred_xy = np.ascontiguousarray(pred_xy, dtype=np.float64).reshape(-1, 2)
    gt_xy = np.ascontiguousarray(gt_xy, dtype=np.float64).reshape(-1, 2)
    order = np.ascontiguousarray(order, dtype=np.int64)
    return _impl(pred_xy, order, gt_xy, float(max_dist))
