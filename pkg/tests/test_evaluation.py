import json
import math

import numpy as np
import pytest

import oracle_eval
from bevground.attributes import MovementState
from bevground.errors import UnknownPromptId, ValidationError
from bevground.evaluation import (
    EvalConfig,
    PredictedBox,
    average_precision,
    compute_nds,
    evaluate,
    evaluate_records,
    match,
    precision_recall,
    tp_errors,
)
from bevground.hog import GroundTruthBox, PromptRecord


def gt_box(x, y, iid="g", size=(2.0, 4.0, 2.0), yaw=0.0, vel=(0.0, 0.0)):
    return GroundTruthBox(instance_id=iid, center=(x, y, 0.0), size_wlh=size, yaw=yaw, velocity_xy=vel)


def pred_box(x, y, score, size=(2.0, 4.0, 2.0), yaw=0.0, vel=(0.0, 0.0), movement=MovementState.STOPPED):
    return PredictedBox(center=(x, y, 0.0), size_wlh=size, yaw=yaw, velocity_xy=vel, movement=movement, score=score)


def perfect_pred(g: GroundTruthBox, score=1.0):
    speed = math.hypot(*g.velocity_xy)
    movement = MovementState.MOVING if speed >= 0.3 else MovementState.STOPPED
    return PredictedBox(
        center=g.center, size_wlh=g.size_wlh, yaw=g.yaw,
        velocity_xy=g.velocity_xy, movement=movement, score=score,
    )


def record(prompt_id, gts, level=1):
    return PromptRecord(
        prompt_id=prompt_id, scene_id="s", frame_id="f", template_id=0, level=level,
        attribute_values={"category": "car"}, text="x", gt=tuple(gts),
    )


def test_match_within_threshold():
    result = match([pred_box(1.9, 0.0, 0.9)], [gt_box(0.0, 0.0)], 2.0)
    assert len(result.pairs) == 1
    assert result.pairs[0][2] == pytest.approx(1.9)


def test_match_outside_threshold():
    result = match([pred_box(2.1, 0.0, 0.9)], [gt_box(0.0, 0.0)], 2.0)
    assert result.pairs == ()
    assert result.unmatched_preds == (0,)
    assert result.unmatched_gt == (0,)


def test_match_greedy_by_score():
    preds = [pred_box(0.5, 0.0, 0.9), pred_box(0.4, 0.0, 0.8)]
    result = match(preds, [gt_box(0.0, 0.0)], 2.0)
    assert result.pairs[0][0] == 0
    assert result.unmatched_preds == (1,)


def test_match_result_invariants_on_random_inputs():
    # Each prediction and each gt appears in at most one pair; every pair
    # respects the distance threshold; unmatched lists are the complements.
    rng = np.random.default_rng(30)
    for _ in range(100):
        preds = [
            pred_box(*rng.uniform(-8, 8, 2), float(rng.random()))
            for _ in range(rng.integers(0, 10))
        ]
        gts = [gt_box(*rng.uniform(-8, 8, 2), iid=f"g{i}") for i in range(rng.integers(0, 10))]
        threshold = float(rng.uniform(0.5, 5.0))
        result = match(preds, gts, threshold)
        pred_ids = [pi for pi, _, _ in result.pairs]
        gt_ids = [gi for _, gi, _ in result.pairs]
        assert len(pred_ids) == len(set(pred_ids))
        assert len(gt_ids) == len(set(gt_ids))
        assert all(dist <= threshold for _, _, dist in result.pairs)
        assert sorted(pred_ids + list(result.unmatched_preds)) == list(range(len(preds)))
        assert sorted(gt_ids + list(result.unmatched_gt)) == list(range(len(gts)))


def test_precision_recall_perfect():
    gts = [gt_box(0, 0, "a"), gt_box(10, 0, "b")]
    pairs = [([perfect_pred(g) for g in gts], gts)]
    assert precision_recall(pairs) == (1.0, 1.0)


def test_precision_recall_half():
    gts = [gt_box(0, 0, "a"), gt_box(10, 0, "b")]
    preds = [perfect_pred(gts[0], 0.9), pred_box(50.0, 50.0, 0.9)]
    assert precision_recall([(preds, gts)]) == (0.5, 0.5)


def test_precision_recall_no_surviving_predictions():
    gts = [gt_box(0, 0)]
    assert precision_recall([([], gts)]) == (0.0, 0.0)
    assert precision_recall([([pred_box(0, 0, 0.1)], gts)]) == (0.0, 0.0)  # below conf
    assert precision_recall([([], [])]) == (1.0, 1.0)


def test_precision_recall_conf_boundary_kept():
    gts = [gt_box(0, 0)]
    precision, recall = precision_recall([([pred_box(0, 0, 0.25)], gts)])
    assert (precision, recall) == (1.0, 1.0)


def test_precision_recall_matches_count_oracle():
    rng = np.random.default_rng(31)
    prompt_pairs = []
    oracle_prompts = []
    for _ in range(20):
        gts = [gt_box(*rng.uniform(-10, 10, 2), iid=f"g{i}") for i in range(rng.integers(1, 6))]
        preds = [
            pred_box(*rng.uniform(-10, 10, 2), float(rng.random()))
            for _ in range(rng.integers(0, 7))
        ]
        prompt_pairs.append((preds, gts))
        oracle_prompts.append(
            {
                "level": 1,
                "gt": [{"center": list(g.center), "size_wlh": list(g.size_wlh), "yaw": g.yaw, "velocity_xy": list(g.velocity_xy)} for g in gts],
                "preds": [{"center": list(p.center), "size_wlh": list(p.size_wlh), "yaw": p.yaw, "velocity_xy": list(p.velocity_xy), "movement": p.movement.value, "score": p.score} for p in preds],
            }
        )
    assert precision_recall(prompt_pairs) == pytest.approx(
        oracle_eval.precision_recall(oracle_prompts, 0.25, 2.0), abs=1e-12
    )


def test_ap_perfect_is_one():
    gts = [gt_box(0, 0, "a"), gt_box(10, 0, "b")]
    pairs = [([perfect_pred(g) for g in gts], gts)]
    assert average_precision(pairs, 0.5) == pytest.approx(1.0)


def test_ap_no_predictions_is_zero():
    assert average_precision([([], [gt_box(0, 0)])], 2.0) == 0.0


def test_ap_three_prediction_hand_case():
    # Operating points: (r=.5, p=1), (r=.5, p=.5), (r=1, p=2/3).
    # Samples .11-.50 interpolate to 1.0; samples .51-1.00 to 2/3.
    # AP = (40*1 + 50*(2/3-.1)/.9)/90 = 193/243.
    gts = [gt_box(0, 0, "a"), gt_box(10, 0, "b")]
    preds = [
        pred_box(0.1, 0.0, 0.9),
        pred_box(50.0, 0.0, 0.8),
        pred_box(10.2, 0.0, 0.7),
    ]
    assert average_precision([(preds, gts)], 2.0) == pytest.approx(193.0 / 243.0, abs=1e-9)


def test_ap_threshold_monotonicity():
    rng = np.random.default_rng(32)
    for _ in range(20):
        gts = [gt_box(*rng.uniform(-10, 10, 2), iid=f"g{i}") for i in range(rng.integers(1, 6))]
        preds = [
            pred_box(*(rng.uniform(-10, 10, 2) * 0.4), float(rng.random()))
            for _ in range(rng.integers(1, 8))
        ]
        pairs = [(preds, gts)]
        assert average_precision(pairs, 4.0) >= average_precision(pairs, 0.5) - 1e-12


def test_tp_errors_perfect():
    gts = [gt_box(0, 0, vel=(1.0, 0.0))]
    errors = tp_errors([([perfect_pred(gts[0])], gts)])
    assert all(v == pytest.approx(0.0) for v in errors.values())


def test_tp_errors_scale():
    gts = [gt_box(0, 0, size=(2.0, 4.0, 2.0))]
    preds = [pred_box(0, 0, 0.9, size=(1.0, 4.0, 2.0))]
    errors = tp_errors([(preds, gts)])
    assert errors["ASE"] == pytest.approx(0.5)  # 1 - 8/16


def test_tp_errors_orientation():
    gts = [gt_box(0, 0, yaw=0.0)]
    preds = [pred_box(0, 0, 0.9, yaw=math.pi / 2)]
    assert tp_errors([(preds, gts)])["AOE"] == pytest.approx(math.pi / 2)
    preds = [pred_box(0, 0, 0.9, yaw=2 * math.pi - 0.1)]
    assert tp_errors([(preds, gts)])["AOE"] == pytest.approx(0.1)


def test_tp_errors_velocity_and_attribute():
    gts = [gt_box(0, 0, vel=(2.0, 0.0))]
    preds = [pred_box(0, 0, 0.9, vel=(0.0, 0.0), movement=MovementState.STOPPED)]
    errors = tp_errors([(preds, gts)])
    assert errors["AVE"] == pytest.approx(2.0)
    assert errors["AAE"] == pytest.approx(1.0)  # gt is moving at 2 m/s


def test_tp_errors_default_to_one_without_matches():
    errors = tp_errors([([], [gt_box(0, 0)])])
    assert errors == {name: 1.0 for name in ("ATE", "ASE", "AOE", "AVE", "AAE")}


def test_nds_formula():
    errors = {"ATE": 0.5, "ASE": 0.25, "AOE": 2.0, "AVE": 0.0, "AAE": 1.0}
    expected = (5 * 0.4 + (0.5 + 0.75 + 0.0 + 1.0 + 0.0)) / 10.0
    assert compute_nds(0.4, errors) == pytest.approx(expected)


def test_adding_false_positive_never_increases_precision():
    rng = np.random.default_rng(33)
    for _ in range(50):
        gts = [gt_box(*rng.uniform(-5, 5, 2), iid=f"g{i}") for i in range(rng.integers(1, 5))]
        preds = [pred_box(*rng.uniform(-5, 5, 2), float(rng.uniform(0.3, 1.0))) for _ in range(rng.integers(0, 5))]
        p0, r0 = precision_recall([(preds, gts)])
        far_fp = pred_box(500.0, 500.0, 0.99)
        p1, r1 = precision_recall([(preds + [far_fp], gts)])
        assert p1 <= p0 + 1e-12
        matched = perfect_pred(gts[0], 0.99)
        p2, r2 = precision_recall([(preds + [matched], gts)])
        assert r2 >= r0 - 1e-12


def test_evaluate_records_perfect(tmp_path):
    gts_a = [gt_box(0, 0, "a", vel=(1.0, 0.0)), gt_box(5, 5, "b")]
    gts_b = [gt_box(-3, 2, "c")]
    records = [record("p1", gts_a, level=1), record("p2", gts_b, level=2)]
    preds = {
        "p1": [perfect_pred(g) for g in gts_a],
        "p2": [perfect_pred(g) for g in gts_b],
    }
    report = evaluate_records(records, preds)
    assert report.precision == pytest.approx(1.0)
    assert report.recall == pytest.approx(1.0)
    assert report.m_ap == pytest.approx(1.0, abs=1e-9)
    assert all(v == pytest.approx(0.0) for v in report.tp_errors.values())
    assert report.nds == pytest.approx(1.0, abs=1e-9)
    assert set(report.per_level) == {1, 2}
    assert report.per_level[1].nds == pytest.approx(1.0, abs=1e-9)


def test_evaluate_records_empty_predictions():
    records = [record("p1", [gt_box(0, 0)])]
    report = evaluate_records(records, {})
    assert report.precision == 0.0
    assert report.recall == 0.0
    assert report.m_ap == 0.0
    assert report.nds == 0.0
    assert all(v == 1.0 for v in report.tp_errors.values())


def test_evaluate_records_unknown_prompt_id():
    records = [record("p1", [gt_box(0, 0)])]
    with pytest.raises(UnknownPromptId):
        evaluate_records(records, {"nope": []})


def test_evaluate_records_rejects_empty_gt_set():
    with pytest.raises(ValidationError):
        evaluate_records([], {})


def test_load_predictions_validation(tmp_path):
    from io import StringIO

    from bevground.evaluation import load_predictions

    line = json.dumps(
        {
            "prompt_id": "p",
            "boxes": [
                {
                    "center": [0, 0, 0],
                    "size_wlh": [1, 1, 1],
                    "yaw_rad": 0.0,
                    "velocity_xy": [0, 0],
                    "movement": "moving",
                    "score": 1.5,
                }
            ],
        }
    )
    with pytest.raises(ValidationError):
        load_predictions(StringIO(line + "\n"))
    dup = json.dumps({"prompt_id": "p", "boxes": []})
    with pytest.raises(ValidationError):
        load_predictions(StringIO(dup + "\n" + dup + "\n"))
    with pytest.raises(ValidationError):
        EvalConfig(dist_threshold=0.0)


def test_evaluate_randomized_against_oracle():
    rng = np.random.default_rng(34)
    records = []
    preds = {}
    oracle_prompts = []
    for p in range(25):
        gts = [
            gt_box(*rng.uniform(-15, 15, 2), iid=f"g{i}", yaw=float(rng.uniform(-3, 3)),
                   vel=tuple(rng.uniform(-2, 2, 2)))
            for i in range(rng.integers(1, 6))
        ]
        boxes = []
        for g in gts:
            if rng.random() < 0.75:
                boxes.append(
                    pred_box(
                        g.center[0] + rng.uniform(-3, 3), g.center[1] + rng.uniform(-3, 3),
                        float(rng.random()), yaw=float(rng.uniform(-3, 3)),
                        vel=tuple(rng.uniform(-2, 2, 2)),
                        movement=MovementState.MOVING if rng.random() < 0.5 else MovementState.STOPPED,
                    )
                )
        level = int(rng.integers(1, 5))
        rec = record(f"p{p:02d}", gts, level=level)
        records.append(rec)
        preds[rec.prompt_id] = boxes
    mine = evaluate_records(records, preds).to_dict()
    ordered = sorted(records, key=lambda r: r.prompt_id)
    theirs = oracle_eval.report(
        [
            {
                "level": r.level,
                "gt": [{"center": list(g.center), "size_wlh": list(g.size_wlh), "yaw": g.yaw, "velocity_xy": list(g.velocity_xy)} for g in r.gt],
                "preds": [{"center": list(b.center), "size_wlh": list(b.size_wlh), "yaw": b.yaw, "velocity_xy": list(b.velocity_xy), "movement": b.movement.value, "score": b.score} for b in preds[r.prompt_id]],
            }
            for r in ordered
        ]
    )

    def compare(a, b, path="$"):
        assert set(a) == set(b), path
        for key in a:
            if isinstance(a[key], dict):
                compare(a[key], b[key], f"{path}.{key}")
            else:
                assert a[key] == pytest.approx(b[key], abs=1e-9), f"{path}.{key}"

    compare(mine, theirs)


def test_rigid_motion_invariance():
    rng = np.random.default_rng(35)
    gts = [
        gt_box(*rng.uniform(-10, 10, 2), iid=f"g{i}", yaw=float(rng.uniform(-3, 3)), vel=tuple(rng.uniform(-2, 2, 2)))
        for i in range(5)
    ]
    boxes = [
        pred_box(g.center[0] + rng.uniform(-2, 2), g.center[1] + rng.uniform(-2, 2),
                 float(rng.random()), yaw=float(rng.uniform(-3, 3)), vel=tuple(rng.uniform(-2, 2, 2)))
        for g in gts
    ]
    base = evaluate_records([record("p", gts)], {"p": boxes}).to_dict()

    theta, tx, ty = 0.7, 12.0, -4.0
    c, s = math.cos(theta), math.sin(theta)

    def move_center(center):
        x, y, z = center
        return (c * x - s * y + tx, s * x + c * y + ty, z)

    def move_vel(vel):
        vx, vy = vel
        return (c * vx - s * vy, s * vx + c * vy)

    gts2 = [
        GroundTruthBox(g.instance_id, move_center(g.center), g.size_wlh, g.yaw + theta, move_vel(g.velocity_xy))
        for g in gts
    ]
    boxes2 = [
        PredictedBox(move_center(b.center), b.size_wlh, b.yaw + theta, move_vel(b.velocity_xy), b.movement, b.score)
        for b in boxes
    ]
    moved = evaluate_records([record("p", gts2)], {"p": boxes2}).to_dict()

    def compare(a, b):
        for key in a:
            if isinstance(a[key], dict):
                compare(a[key], b[key])
            else:
                assert a[key] == pytest.approx(b[key], abs=1e-9), key

    compare(base, moved)


def test_evaluate_files(tmp_path, fixture_scene):
    from io import StringIO

    from bevground.hog import generate_dataset, iter_records

    sink = StringIO()
    generate_dataset([fixture_scene], (1,), sink)
    gt_path = tmp_path / "gt.jsonl"
    gt_path.write_text(sink.getvalue())

    lines = []
    for rec in iter_records(StringIO(sink.getvalue())):
        boxes = [
            {
                "center": list(g.center),
                "size_wlh": list(g.size_wlh),
                "yaw_rad": g.yaw,
                "velocity_xy": list(g.velocity_xy),
                "movement": "moving" if math.hypot(*g.velocity_xy) >= 0.3 else "stopped",
                "score": 1.0,
            }
            for g in rec.gt
        ]
        lines.append(json.dumps({"prompt_id": rec.prompt_id, "boxes": boxes}))
    pred_path = tmp_path / "pred.jsonl"
    pred_path.write_text("\n".join(lines) + "\n")

    report = evaluate(str(gt_path), str(pred_path))
    assert report.nds == pytest.approx(1.0, abs=1e-9)
    doc = report.to_dict()
    assert set(doc) == {"precision", "recall", "mAP", "ap_per_threshold", "tp_errors", "NDS", "per_level"}
    assert set(doc["ap_per_threshold"]) == {"0.5", "1.0", "2.0", "4.0"}
    assert set(doc["per_level"]) == {"1"}
    assert "per_level" not in doc["per_level"]["1"]


def test_fixture_perturbed_predictions_match_oracle(fixture_scene):
    # Predictions = fixture gt boxes plus seeded noise; compare the full
    # report against the independent reimplementation.
    from io import StringIO

    from bevground.hog import generate_dataset, iter_records

    sink = StringIO()
    generate_dataset([fixture_scene], (1, 2), sink)
    records = list(iter_records(StringIO(sink.getvalue())))
    rng = np.random.default_rng(77)
    preds = {}
    for rec in records:
        boxes = []
        for g in rec.gt:
            if rng.random() < 0.15:
                continue  # dropped detection
            boxes.append(
                PredictedBox(
                    center=(
                        g.center[0] + float(rng.normal(0, 1.2)),
                        g.center[1] + float(rng.normal(0, 1.2)),
                        g.center[2],
                    ),
                    size_wlh=tuple(s * float(rng.uniform(0.7, 1.3)) for s in g.size_wlh),
                    yaw=g.yaw + float(rng.normal(0, 0.3)),
                    velocity_xy=(
                        g.velocity_xy[0] + float(rng.normal(0, 0.5)),
                        g.velocity_xy[1] + float(rng.normal(0, 0.5)),
                    ),
                    movement=MovementState.MOVING if rng.random() < 0.5 else MovementState.STOPPED,
                    score=float(rng.uniform(0.05, 1.0)),
                )
            )
        preds[rec.prompt_id] = boxes
    mine = evaluate_records(records, preds).to_dict()
    ordered = sorted(records, key=lambda r: r.prompt_id)
    theirs = oracle_eval.report(
        [
            {
                "level": r.level,
                "gt": [{"center": list(g.center), "size_wlh": list(g.size_wlh), "yaw": g.yaw, "velocity_xy": list(g.velocity_xy)} for g in r.gt],
                "preds": [{"center": list(b.center), "size_wlh": list(b.size_wlh), "yaw": b.yaw, "velocity_xy": list(b.velocity_xy), "movement": b.movement.value, "score": b.score} for b in preds[r.prompt_id]],
            }
            for r in ordered
        ]
    )

    def compare(a, b, path="$"):
        assert set(a) == set(b), path
        for key in a:
            if isinstance(a[key], dict):
                compare(a[key], b[key], f"{path}.{key}")
            else:
                assert a[key] == pytest.approx(b[key], abs=1e-9), f"{path}.{key}"

    compare(mine, theirs)


def test_report_metrics_in_range():
    rng = np.random.default_rng(36)
    records, preds = [], {}
    for p in range(10):
        gts = [gt_box(*rng.uniform(-10, 10, 2), iid=f"g{i}") for i in range(rng.integers(1, 4))]
        rec = record(f"p{p}", gts, level=int(rng.integers(1, 5)))
        records.append(rec)
        preds[rec.prompt_id] = [pred_box(*rng.uniform(-10, 10, 2), float(rng.random())) for _ in range(3)]
    report = evaluate_records(records, preds)
    for value in (report.precision, report.recall, report.m_ap, report.nds, *report.ap_per_threshold.values()):
        assert 0.0 <= value <= 1.0
    assert 0.0 <= report.tp_errors["AOE"] <= math.pi
    assert report.tp_errors["ATE"] >= 0.0
    assert report.tp_errors["AVE"] >= 0.0
    assert 0.0 <= report.tp_errors["ASE"] <= 1.0
    assert 0.0 <= report.tp_errors["AAE"] <= 1.0
    # NDS recomposes from its parts, in the top-level report and per level.
    assert report.nds == pytest.approx(compute_nds(report.m_ap, report.tp_errors))
    for level_report in report.per_level.values():
        assert level_report.nds == pytest.approx(
            compute_nds(level_report.m_ap, level_report.tp_errors)
        )
