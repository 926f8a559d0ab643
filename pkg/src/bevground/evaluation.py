"""Grounding evaluation: matching, precision/recall, AP/mAP, TP errors, NDS.

Matching is greedy in descending score order (equal scores keep input
order): each prediction claims the nearest still-unmatched ground-truth box
by BEV center distance, when that distance does not exceed the threshold.

Average precision integrates the pooled recall-precision curve at 101
evenly spaced recall samples, interpolating each sample as the maximum
precision at any operating point with recall at or above it; samples below
0.11 recall are discarded and the remainder is normalized as
(p - 0.1)/0.9, clipped at zero. mAP averages AP over the BEV distance
thresholds {0.5, 1, 2, 4} m. Grounding prompts are treated as a single
"referred object" class throughout.

The composite score is
    NDS = (5 * mAP + sum_e (1 - min(1, e))) / 10
over the five true-positive errors (translation, scale, orientation,
velocity, attribute); each error defaults to its worst value 1.0 when there
are no matched pairs at all.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .attributes import MOVING_SPEED_THRESHOLD, MovementState
from .errors import ParseError, UnknownPromptId, ValidationError
from .hog import GroundTruthBox, PromptRecord, iter_records
from .matching import greedy_assign, score_order

AP_DIST_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
# k/100 exactly, so sample values agree bit-for-bit with any k/100 elsewhere.
RECALL_SAMPLES = np.arange(0, 101, dtype=np.float64) / 100.0
MIN_RECALL = 0.1
MIN_PRECISION = 0.1

TP_ERROR_NAMES = ("ATE", "ASE", "AOE", "AVE", "AAE")


@dataclass(frozen=True)
class PredictedBox:
    center: tuple[float, float, float]
    size_wlh: tuple[float, float, float]
    yaw: float
    velocity_xy: tuple[float, float]
    movement: MovementState
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must be in [0, 1], got {self.score}")
        if not all(s > 0.0 for s in self.size_wlh):
            raise ValidationError("size_wlh must be strictly positive")
        if self.movement is MovementState.UNKNOWN:
            raise ValidationError("predictions must commit to moving or stopped")


@dataclass(frozen=True)
class MatchResult:
    """pairs = (prediction index, gt index, BEV center distance)."""

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_gt: tuple[int, ...]


@dataclass(frozen=True)
class EvalConfig:
    conf_threshold: float = 0.25
    dist_threshold: float = 2.0
    ap_dist_thresholds: tuple[float, ...] = AP_DIST_THRESHOLDS

    def __post_init__(self):
        if self.conf_threshold < 0.0 or self.dist_threshold <= 0.0:
            raise ValidationError("thresholds must be positive")


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    m_ap: float
    ap_per_threshold: dict[float, float]
    tp_errors: dict[str, float]
    nds: float
    per_level: dict[int, "MetricsReport"] = field(default_factory=dict)

    def to_dict(self, include_levels: bool = True) -> dict:
        doc = {
            "precision": self.precision,
            "recall": self.recall,
            "mAP": self.m_ap,
            "ap_per_threshold": {str(float(t)): v for t, v in sorted(self.ap_per_threshold.items())},
            "tp_errors": {name: self.tp_errors[name] for name in TP_ERROR_NAMES},
            "NDS": self.nds,
        }
        if include_levels:
            doc["per_level"] = {
                str(level): report.to_dict(include_levels=False)
                for level, report in sorted(self.per_level.items())
            }
        return doc


PromptPair = tuple[Sequence[PredictedBox], Sequence[GroundTruthBox]]


def _pred_xy(preds: Sequence[PredictedBox]) -> np.ndarray:
    return np.array([[p.center[0], p.center[1]] for p in preds], dtype=np.float64).reshape(-1, 2)


def _gt_xy(gts: Sequence[GroundTruthBox]) -> np.ndarray:
    return np.array([[g.center[0], g.center[1]] for g in gts], dtype=np.float64).reshape(-1, 2)


def match(preds: Sequence[PredictedBox], gts: Sequence[GroundTruthBox], dist_threshold: float) -> MatchResult:
    """Greedy score-ordered matching of one prompt's predictions to its gt."""
    if dist_threshold <= 0.0:
        raise ValidationError("dist_threshold must be positive")
    scores = np.array([p.score for p in preds], dtype=np.float64)
    assigned = greedy_assign(_pred_xy(preds), score_order(scores), _gt_xy(gts), dist_threshold)
    pairs = []
    for i in np.flatnonzero(assigned >= 0):
        j = int(assigned[i])
        dist = math.hypot(
            preds[i].center[0] - gts[j].center[0],
            preds[i].center[1] - gts[j].center[1],
        )
        pairs.append((int(i), j, dist))
    matched_gt = {j for _, j, _ in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_preds=tuple(i for i in range(len(preds)) if assigned[i] < 0),
        unmatched_gt=tuple(j for j in range(len(gts)) if j not in matched_gt),
    )


def precision_recall(
    prompt_pairs: Iterable[PromptPair],
    conf_threshold: float = 0.25,
    dist_threshold: float = 2.0,
) -> tuple[float, float]:
    """Micro-averaged precision and recall over all prompts.

    Predictions below the confidence threshold are dropped before matching.
    With no surviving predictions, precision is 1.0 when there is also no
    ground truth and 0.0 otherwise; recall is vacuously 1.0 with no gt.
    """
    tp = fp = fn = 0
    for preds, gts in prompt_pairs:
        kept = [p for p in preds if p.score >= conf_threshold]
        result = match(kept, gts, dist_threshold)
        tp += len(result.pairs)
        fp += len(result.unmatched_preds)
        fn += len(result.unmatched_gt)
    if tp + fp == 0:
        precision = 1.0 if tp + fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return precision, recall


def _tp_flags(prompt_pairs: Iterable[PromptPair], dist_threshold: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Pooled (scores, tp flags, total gt) with per-prompt greedy matching."""
    scores: list[float] = []
    flags: list[bool] = []
    n_gt = 0
    for preds, gts in prompt_pairs:
        n_gt += len(gts)
        if not preds:
            continue
        arr = np.array([p.score for p in preds], dtype=np.float64)
        assigned = greedy_assign(_pred_xy(preds), score_order(arr), _gt_xy(gts), dist_threshold)
        scores.extend(arr.tolist())
        flags.extend((assigned >= 0).tolist())
    return np.array(scores, dtype=np.float64), np.array(flags, dtype=bool), n_gt


def average_precision(prompt_pairs: Iterable[PromptPair], dist_threshold: float) -> float:
    """AP of the pooled recall-precision sweep at one distance threshold."""
    scores, flags, n_gt = _tp_flags(list(prompt_pairs), dist_threshold)
    if n_gt == 0 or scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp_cum = np.cumsum(flags[order].astype(np.float64))
    fp_cum = np.cumsum((~flags[order]).astype(np.float64))
    recalls = tp_cum / n_gt
    precisions = tp_cum / (tp_cum + fp_cum)

    # Interpolated precision at each recall sample: the best precision among
    # operating points achieving at least that recall.
    sort_idx = np.argsort(recalls, kind="stable")
    rec_sorted = recalls[sort_idx]
    prec_sorted = precisions[sort_idx]
    suffix_max = np.maximum.accumulate(prec_sorted[::-1])[::-1]
    positions = np.searchsorted(rec_sorted, RECALL_SAMPLES, side="left")
    interpolated = np.where(positions < rec_sorted.size, suffix_max[np.minimum(positions, rec_sorted.size - 1)], 0.0)

    usable = RECALL_SAMPLES > MIN_RECALL + 1e-12
    clipped = np.maximum(0.0, interpolated[usable] - MIN_PRECISION) / (1.0 - MIN_PRECISION)
    return float(np.mean(clipped))


def _aligned_iou(size_a: Sequence[float], size_b: Sequence[float]) -> float:
    inter = math.prod(min(a, b) for a, b in zip(size_a, size_b))
    vol_a = math.prod(size_a)
    vol_b = math.prod(size_b)
    return inter / (vol_a + vol_b - inter)


def _yaw_diff(a: float, b: float) -> float:
    d = math.fmod(abs(a - b), 2.0 * math.pi)
    return 2.0 * math.pi - d if d > math.pi else d


def gt_movement(box: GroundTruthBox) -> MovementState:
    speed = math.hypot(box.velocity_xy[0], box.velocity_xy[1])
    return MovementState.MOVING if speed >= MOVING_SPEED_THRESHOLD else MovementState.STOPPED


def tp_errors(
    prompt_pairs: Iterable[PromptPair],
    conf_threshold: float = 0.25,
    dist_threshold: float = 2.0,
) -> dict[str, float]:
    """Mean true-positive errors over all matched pairs; 1.0 each when none match."""
    ate: list[float] = []
    ase: list[float] = []
    aoe: list[float] = []
    ave: list[float] = []
    attr_correct: list[float] = []
    for preds, gts in prompt_pairs:
        kept = [p for p in preds if p.score >= conf_threshold]
        result = match(kept, gts, dist_threshold)
        for pi, gi, dist in result.pairs:
            pred, gt = kept[pi], gts[gi]
            ate.append(dist)
            ase.append(1.0 - _aligned_iou(pred.size_wlh, gt.size_wlh))
            aoe.append(_yaw_diff(pred.yaw, gt.yaw))
            ave.append(
                math.hypot(
                    pred.velocity_xy[0] - gt.velocity_xy[0],
                    pred.velocity_xy[1] - gt.velocity_xy[1],
                )
            )
            attr_correct.append(1.0 if pred.movement is gt_movement(gt) else 0.0)
    if not ate:
        return {name: 1.0 for name in TP_ERROR_NAMES}
    return {
        "ATE": float(np.mean(ate)),
        "ASE": float(np.mean(ase)),
        "AOE": float(np.mean(aoe)),
        "AVE": float(np.mean(ave)),
        "AAE": 1.0 - float(np.mean(attr_correct)),
    }


def compute_nds(m_ap: float, errors: dict[str, float]) -> float:
    total = 5.0 * m_ap + sum(1.0 - min(1.0, errors[name]) for name in TP_ERROR_NAMES)
    return total / 10.0


def _report(prompt_pairs: list[PromptPair], config: EvalConfig) -> MetricsReport:
    precision, recall = precision_recall(prompt_pairs, config.conf_threshold, config.dist_threshold)
    ap_per = {t: average_precision(prompt_pairs, t) for t in config.ap_dist_thresholds}
    m_ap = float(np.mean(list(ap_per.values())))
    errors = tp_errors(prompt_pairs, config.conf_threshold, config.dist_threshold)
    return MetricsReport(
        precision=precision,
        recall=recall,
        m_ap=m_ap,
        ap_per_threshold=ap_per,
        tp_errors=errors,
        nds=compute_nds(m_ap, errors),
    )


def evaluate_records(
    gt_records: Sequence[PromptRecord],
    predictions: dict[str, list[PredictedBox]],
    config: EvalConfig = EvalConfig(),
) -> MetricsReport:
    """Full metrics for parsed records and predictions keyed by prompt_id."""
    if not gt_records:
        raise ValidationError("ground-truth record set is empty")
    ids = [r.prompt_id for r in gt_records]
    id_set = set(ids)
    if len(ids) != len(id_set):
        raise ValidationError("duplicate prompt_id in ground truth")
    for prompt_id in predictions:
        if prompt_id not in id_set:
            raise UnknownPromptId(f"prediction references unknown prompt_id {prompt_id!r}")

    ordered = sorted(gt_records, key=lambda r: r.prompt_id)
    pairs = [(predictions.get(r.prompt_id, []), list(r.gt)) for r in ordered]
    report = _report(pairs, config)

    per_level: dict[int, MetricsReport] = {}
    for level in sorted({r.level for r in ordered}):
        subset = [
            (predictions.get(r.prompt_id, []), list(r.gt))
            for r in ordered
            if r.level == level
        ]
        per_level[level] = _report(subset, config)
    return MetricsReport(
        precision=report.precision,
        recall=report.recall,
        m_ap=report.m_ap,
        ap_per_threshold=report.ap_per_threshold,
        tp_errors=report.tp_errors,
        nds=report.nds,
        per_level=per_level,
    )


def _parse_predicted_box(doc: dict, path: str) -> PredictedBox:
    try:
        movement = MovementState(doc["movement"])
        box = PredictedBox(
            center=tuple(float(v) for v in doc["center"]),
            size_wlh=tuple(float(v) for v in doc["size_wlh"]),
            yaw=float(doc["yaw_rad"]),
            velocity_xy=tuple(float(v) for v in doc["velocity_xy"]),
            movement=movement,
            score=float(doc["score"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed predicted box: {exc}", path) from None
    if len(box.center) != 3 or len(box.size_wlh) != 3 or len(box.velocity_xy) != 2:
        raise ParseError("box vectors have wrong arity", path)
    return box


def load_predictions(handle: IO[str], where: str = "<predictions>") -> dict[str, list[PredictedBox]]:
    """Parse prediction JSONL: {"prompt_id": str, "boxes": [...]} per line."""
    out: dict[str, list[PredictedBox]] = {}
    for lineno, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        path = f"{where}:{lineno}"
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", path) from None
        if not isinstance(doc, dict) or "prompt_id" not in doc or "boxes" not in doc:
            raise ParseError("prediction line needs prompt_id and boxes", path)
        prompt_id = doc["prompt_id"]
        if prompt_id in out:
            raise ValidationError(f"duplicate prompt_id {prompt_id!r}", path)
        out[prompt_id] = [
            _parse_predicted_box(b, f"{path}.boxes[{i}]") for i, b in enumerate(doc["boxes"])
        ]
    return out


def evaluate(gt_path: str, pred_path: str, config: EvalConfig = EvalConfig()) -> MetricsReport:
    """Evaluate a prediction JSONL file against a prompt JSONL file."""
    with open(gt_path, "r", encoding="utf-8") as handle:
        gt_records = list(iter_records(handle, where=str(gt_path)))
    with open(pred_path, "r", encoding="utf-8") as handle:
        predictions = load_predictions(handle, where=str(pred_path))
    return evaluate_records(gt_records, predictions, config)
