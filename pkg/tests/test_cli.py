import filecmp
import json
import math

import pytest

import oracle_hog
from bevground.cli import main
from bevground.hog import iter_records
from conftest import SCENES_DIR


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_generate_matches_oracle(tmp_path, capsys, fixture_scene):
    out = tmp_path / "prompts.jsonl"
    code, stdout, _ = run_cli(["generate", "--scenes", SCENES_DIR, "--out", str(out)], capsys)
    assert code == 0
    expected = oracle_hog.dataset_jsonl([fixture_scene])
    assert out.read_text() == expected
    assert stdout.strip() == str(len(expected.splitlines()))
    # Rerunning overwrites with identical bytes.
    assert run_cli(["generate", "--scenes", SCENES_DIR, "--out", str(out)], capsys)[0] == 0
    assert out.read_text() == expected


def test_generate_level_filter(tmp_path, capsys):
    out = tmp_path / "prompts.jsonl"
    code, _, _ = run_cli(["generate", "--scenes", SCENES_DIR, "--out", str(out), "--levels", "1"], capsys)
    assert code == 0
    levels = {json.loads(line)["level"] for line in out.read_text().splitlines()}
    assert levels == {1}


def test_generate_empty_dir_fails(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "prompts.jsonl"
    code, _, stderr = run_cli(["generate", "--scenes", str(empty), "--out", str(out)], capsys)
    assert code == 1
    assert "no scenes found" in stderr
    assert not out.exists()


def test_generate_invalid_levels(tmp_path, capsys):
    code, _, stderr = run_cli(
        ["generate", "--scenes", SCENES_DIR, "--out", str(tmp_path / "x"), "--levels", "1,9"],
        capsys,
    )
    assert code == 1
    assert "levels" in stderr


def test_generate_invalid_scene_reports_path(tmp_path, capsys):
    bad_dir = tmp_path / "scenes"
    bad_dir.mkdir()
    doc = {
        "scene_id": "s",
        "frames": [
            {
                "frame_id": "f0",
                "timestamp_us": 1,
                "ego_pose": {"translation": [0, 0, 0], "yaw_rad": 0.0},
                "instances": [
                    {
                        "instance_id": "a",
                        "category": "spaceship",
                        "center": [0, 0, 0],
                        "size_wlh": [1, 1, 1],
                        "yaw_rad": 0.0,
                        "color": None,
                    }
                ],
            }
        ],
    }
    (bad_dir / "bad.json").write_text(json.dumps(doc))
    code, _, stderr = run_cli(["generate", "--scenes", str(bad_dir), "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert "instances[0]" in stderr and "spaceship" in stderr


def test_nugr_threads_does_not_change_output(tmp_path, capsys, monkeypatch):
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    monkeypatch.delenv("NUGR_THREADS", raising=False)
    assert run_cli(["generate", "--scenes", SCENES_DIR, "--out", str(out1)], capsys)[0] == 0
    monkeypatch.setenv("NUGR_THREADS", "3")
    assert run_cli(["generate", "--scenes", SCENES_DIR, "--out", str(out2)], capsys)[0] == 0
    assert out1.read_text() == out2.read_text()


@pytest.mark.parametrize("value", ["0", "-2", "abc"])
def test_nugr_threads_invalid(tmp_path, capsys, monkeypatch, value):
    monkeypatch.setenv("NUGR_THREADS", value)
    code, _, stderr = run_cli(
        ["generate", "--scenes", SCENES_DIR, "--out", str(tmp_path / "x")], capsys
    )
    assert code == 1
    assert "NUGR_THREADS" in stderr


def generate_gt(tmp_path, capsys, levels="1,2,3,4"):
    gt = tmp_path / "gt.jsonl"
    code, _, _ = run_cli(
        ["generate", "--scenes", SCENES_DIR, "--out", str(gt), "--levels", levels], capsys
    )
    assert code == 0
    return gt


def write_perfect_predictions(gt_path, pred_path):
    lines = []
    with open(gt_path, "r", encoding="utf-8") as handle:
        for record in iter_records(handle):
            boxes = [
                {
                    "center": list(g.center),
                    "size_wlh": list(g.size_wlh),
                    "yaw_rad": g.yaw,
                    "velocity_xy": list(g.velocity_xy),
                    "movement": "moving" if math.hypot(*g.velocity_xy) >= 0.3 else "stopped",
                    "score": 1.0,
                }
                for g in record.gt
            ]
            lines.append(json.dumps({"prompt_id": record.prompt_id, "boxes": boxes}))
    pred_path.write_text("\n".join(lines) + "\n")


def test_stats_on_generated_prompts(tmp_path, capsys):
    gt = generate_gt(tmp_path, capsys)
    out = tmp_path / "stats.json"
    code, stdout, _ = run_cli(["stats", "--prompts", str(gt), "--out", str(out)], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["prompt_count"] == len(gt.read_text().splitlines())
    assert sum(doc["per_level"].values()) == doc["prompt_count"]
    assert sum(doc["objects_per_prompt"]["histogram"].values()) == doc["prompt_count"]
    assert len(doc["word_frequency"]) <= 50
    assert stdout.strip() == str(doc["prompt_count"])


def test_stats_empty_file(tmp_path, capsys):
    prompts = tmp_path / "empty.jsonl"
    prompts.write_text("")
    out = tmp_path / "stats.json"
    code, _, _ = run_cli(["stats", "--prompts", str(prompts), "--out", str(out)], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["prompt_count"] == 0


def test_stats_truncated_line_reports_lineno(tmp_path, capsys):
    gt = generate_gt(tmp_path, capsys, levels="1")
    lines = gt.read_text().splitlines()
    lines[2] = lines[2][: len(lines[2]) // 2]
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(lines) + "\n")
    out = tmp_path / "stats.json"
    code, _, stderr = run_cli(["stats", "--prompts", str(broken), "--out", str(out)], capsys)
    assert code == 1
    assert ":3" in stderr
    assert not out.exists()


def test_eval_perfect_predictions(tmp_path, capsys):
    gt = generate_gt(tmp_path, capsys)
    pred = tmp_path / "pred.jsonl"
    write_perfect_predictions(gt, pred)
    out = tmp_path / "metrics.json"
    code, stdout, _ = run_cli(
        ["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(out)], capsys
    )
    assert code == 0
    assert "NDS=1.0000" in stdout
    doc = json.loads(out.read_text())
    assert doc["NDS"] == pytest.approx(1.0, abs=1e-9)
    assert doc["precision"] == pytest.approx(1.0)
    assert set(doc["per_level"]) == {"1", "2", "3", "4"}


def test_eval_unknown_prompt_id(tmp_path, capsys):
    gt = generate_gt(tmp_path, capsys, levels="1")
    pred = tmp_path / "pred.jsonl"
    pred.write_text(json.dumps({"prompt_id": "nonexistent/id", "boxes": []}) + "\n")
    out = tmp_path / "metrics.json"
    code, _, stderr = run_cli(["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(out)], capsys)
    assert code == 1
    assert "nonexistent/id" in stderr
    assert not out.exists()


def test_eval_malformed_prediction_file(tmp_path, capsys):
    gt = generate_gt(tmp_path, capsys, levels="1")
    pred = tmp_path / "pred.jsonl"
    pred.write_text("{broken\n")
    code, _, stderr = run_cli(
        ["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(tmp_path / "m.json")], capsys
    )
    assert code == 1


def test_eval_custom_thresholds(tmp_path, capsys):
    gt = generate_gt(tmp_path, capsys, levels="1")
    pred = tmp_path / "pred.jsonl"
    write_perfect_predictions(gt, pred)
    out = tmp_path / "metrics.json"
    code, _, _ = run_cli(
        ["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(out), "--conf", "0.5", "--dist", "1.0"],
        capsys,
    )
    assert code == 0


def test_internal_error_exit_code(tmp_path, capsys, monkeypatch):
    gt = generate_gt(tmp_path, capsys, levels="1")
    pred = tmp_path / "pred.jsonl"
    write_perfect_predictions(gt, pred)

    def boom(*args, **kwargs):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr("bevground.cli.evaluate", boom)
    code, _, stderr = run_cli(
        ["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(tmp_path / "m.json")], capsys
    )
    assert code == 2
    assert "internal error" in stderr


def test_demo_outputs_and_determinism(tmp_path, capsys):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run_cli(["demo", "--scenes", SCENES_DIR, "--seed", "0", "--out", str(out_a)], capsys)[0] == 0
    assert run_cli(["demo", "--scenes", SCENES_DIR, "--seed", "0", "--out", str(out_b)], capsys)[0] == 0
    names = ["prompts.jsonl", "predictions.jsonl", "traces.jsonl", "losses.json", "metrics.json", "fuser.json"]
    for name in names:
        assert (out_a / name).exists()
        assert filecmp.cmp(out_a / name, out_b / name, shallow=False), name

    out_c = tmp_path / "c"
    assert run_cli(["demo", "--scenes", SCENES_DIR, "--seed", "1", "--out", str(out_c)], capsys)[0] == 0
    assert not filecmp.cmp(out_a / "metrics.json", out_c / "metrics.json", shallow=False)


def test_demo_failure_names_stage(tmp_path, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise ValueError("synthetic fusion failure")

    monkeypatch.setattr("bevground.demo.fuse", boom)
    code, _, stderr = run_cli(
        ["demo", "--scenes", SCENES_DIR, "--seed", "0", "--out", str(tmp_path / "d")], capsys
    )
    assert code == 1
    assert "stage 'fusion'" in stderr


def test_demo_traces_align_with_prompts(tmp_path, capsys):
    out = tmp_path / "demo"
    assert run_cli(["demo", "--scenes", SCENES_DIR, "--seed", "0", "--out", str(out)], capsys)[0] == 0
    prompts = (out / "prompts.jsonl").read_text().splitlines()
    traces = (out / "traces.jsonl").read_text().splitlines()
    preds = (out / "predictions.jsonl").read_text().splitlines()
    assert len(prompts) == len(traces) == len(preds)
    trace = json.loads(traces[0])
    assert set(trace) == {"tokens", "det_position", "loss_mask", "aggregated_context"}
    assert trace["loss_mask"][trace["det_position"] + 1] == 0
    losses = json.loads((out / "losses.json").read_text())
    assert set(losses) == {"l_txt", "l_det", "l_c", "total"}
    assert losses["total"] == pytest.approx(losses["l_txt"] + losses["l_det"] + losses["l_c"])
