"""Forward-value computation of the composite training objective.

    total = w_txt * L_txt + w_det * L_det + w_c * L_c

L_txt is masked auto-regressive cross-entropy over generated tokens (the
placeholder token's position is excluded via the loss mask). L_det is a
focal classification term over prediction scores (matched predictions
target 1, unmatched target 0) plus an L1 regression term over matched
pairs' 9-dim box vectors (x, y, z, w, l, h, yaw, vx, vy), with matching at
the 2 m evaluation threshold. L_c applies the focal loss to each
similarity-matrix logit after a temperature-scaled logistic.

No gradients anywhere; these are plain numbers for tests and the demo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .evaluation import PredictedBox, match
from .hog import GroundTruthBox

CONTRASTIVE_TEMPERATURE = 0.07
PROB_CLAMP = 1e-7
DET_MATCH_DIST = 2.0


@dataclass(frozen=True)
class LossConfig:
    w_txt: float = 1.0
    w_det: float = 1.0
    w_c: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        if min(self.w_txt, self.w_det, self.w_c) < 0.0:
            raise ValidationError("loss weights must be nonnegative")


@dataclass(frozen=True)
class DetectionLoss:
    cls_term: float
    l1_term: float

    @property
    def total(self) -> float:
        return self.cls_term + self.l1_term


@dataclass(frozen=True)
class LossReport:
    l_txt: float
    l_det: float
    l_c: float
    total: float
    det_cls: float | None = None
    det_l1: float | None = None

    def to_dict(self) -> dict:
        return {"l_txt": self.l_txt, "l_det": self.l_det, "l_c": self.l_c, "total": self.total}


def text_ce(logits: np.ndarray, targets: Sequence[int], loss_mask: Sequence[bool]) -> float:
    """Mean cross-entropy over unmasked positions; 0.0 with nothing unmasked."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(loss_mask, dtype=bool)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0] or mask.shape[0] != targets.shape[0]:
        raise DimensionMismatch(
            f"logits {logits.shape}, targets {targets.shape} and mask {mask.shape} disagree"
        )
    if not mask.any():
        return 0.0
    kept = logits[mask]
    kept_targets = targets[mask]
    shifted = kept - kept.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(kept.shape[0]), kept_targets] - log_z
    return float(-log_probs.mean())


def focal(p: float, target: int, gamma: float = 2.0, alpha: float = 0.25) -> float:
    """Binary focal loss for one probability."""
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    if target == 1:
        return -alpha * (1.0 - p) ** gamma * math.log(p)
    if target == 0:
        return -(1.0 - alpha) * p**gamma * math.log(1.0 - p)
    raise ValidationError("target must be 0 or 1")


def det_loss(
    preds: Sequence[PredictedBox],
    gts: Sequence[GroundTruthBox],
    gamma: float = 2.0,
    alpha: float = 0.25,
    dist_threshold: float = DET_MATCH_DIST,
) -> DetectionLoss:
    """Focal score term over all predictions plus L1 over matched box vectors."""
    result = match(preds, gts, dist_threshold) if preds else None
    matched = {pi for pi, _, _ in result.pairs} if result else set()
    if preds:
        cls_term = float(
            np.mean([focal(p.score, 1 if i in matched else 0, gamma, alpha) for i, p in enumerate(preds)])
        )
    else:
        cls_term = 0.0
    l1_values = []
    if result:
        for pi, gi, _ in result.pairs:
            p, g = preds[pi], gts[gi]
            pv = (*p.center, *p.size_wlh, p.yaw, *p.velocity_xy)
            gv = (*g.center, *g.size_wlh, g.yaw, *g.velocity_xy)
            l1_values.append(sum(abs(a - b) for a, b in zip(pv, gv)) / 9.0)
    l1_term = float(np.mean(l1_values)) if l1_values else 0.0
    return DetectionLoss(cls_term=cls_term, l1_term=l1_term)


def contrastive_loss(sims: np.ndarray, targets: Sequence[int], gamma: float = 2.0,
                     alpha: float = 0.25) -> float:
    """Mean focal loss over temperature-scaled similarity logits; 0.0 when empty."""
    sims = np.asarray(sims, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if sims.shape[0] != targets.shape[0]:
        raise DimensionMismatch("similarities and targets disagree in length")
    if sims.size == 0:
        return 0.0
    values = []
    for s, t in zip(sims, targets):
        p = 1.0 / (1.0 + math.exp(-float(s) / CONTRASTIVE_TEMPERATURE))
        values.append(focal(p, int(t), gamma, alpha))
    return float(np.mean(values))


def total_loss(l_txt: float, l_det: float | DetectionLoss, l_c: float,
               cfg: LossConfig = LossConfig()) -> LossReport:
    """Weighted combination; the report's total is recomputable from its parts."""
    det_cls = det_l1 = None
    if isinstance(l_det, DetectionLoss):
        det_cls, det_l1 = l_det.cls_term, l_det.l1_term
        l_det = l_det.total
    for name, value in (("l_txt", l_txt), ("l_det", l_det), ("l_c", l_c)):
        if not math.isfinite(value) or value < 0.0:
            raise ValidationError(f"{name} must be finite and nonnegative, got {value}")
    return LossReport(
        l_txt=l_txt,
        l_det=l_det,
        l_c=l_c,
        total=cfg.w_txt * l_txt + cfg.w_det * l_det + cfg.w_c * l_c,
        det_cls=det_cls,
        det_l1=det_l1,
    )
