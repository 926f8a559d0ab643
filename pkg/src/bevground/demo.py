"""Seeded end-to-end pipeline over toy fixtures.

For every generated prompt the demo runs the whole stack:

    detector stub -> multimodal input -> toy LM aggregation ->
    query selection -> fusion -> box decoding -> losses -> metrics

The detector stub is not a detector: it embeds the prompt's ground-truth
boxes through a fixed seeded linear map (plus noise rows) so the downstream
machinery has structured object queries to chew on. All weights, noise and
the toy LM derive from the run seed, so the output directory is
byte-identical across runs with the same seed.

Toy dimensions: 16 object queries of width 8, context width 32, 8 selected
queries, 2 heads.
"""

from __future__ import annotations

import json
import math
import os
from contextlib import contextmanager
from io import StringIO

import numpy as np

from .errors import ToolkitError
from .evaluation import EvalConfig, PredictedBox, evaluate_records
from .fileio import atomic_write_text
from .fusion import BoxHead, FuserConfig, ProjectionPair, decode_boxes, fuse, select_top_k, similarity
from .hog import PLURALS, PromptRecord, generate_dataset, iter_records
from .losses import LossConfig, contrastive_loss, det_loss, text_ce, total_loss
from .rng import SplitMix64, child_seed
from .scene import CATEGORIES, COLORS, Scene
from .token_protocol import (
    ScriptedToyLM,
    Vocabulary,
    Adapter,
    build_multimodal_input,
    render_thinking_response,
    run_aggregation,
)

N_QUERIES = 16
QUERY_DIM = 8
CONTEXT_DIM = 32
NOISE_SCALE = 0.5

SECTOR_WORDS = ("front", "back", "left", "right")
COUNT_WORDS = (
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
    "seventeen", "eighteen", "nineteen", "twenty",
)


@contextmanager
def _stage(name: str):
    """Attribute any failure to its pipeline stage for the CLI diagnostics."""
    try:
        yield
    except ToolkitError as exc:
        raise ToolkitError(f"demo stage {name!r} failed: {exc}") from exc
    except Exception as exc:
        raise ToolkitError(f"demo stage {name!r} failed: {type(exc).__name__}: {exc}") from exc


def demo_vocabulary() -> Vocabulary:
    """Fixed vocabulary covering every surface word the generators can emit."""
    words: list[str] = [
        "Please", "detect", "all", "the", "objects", "object", "in", "of",
        "ego", "vehicle", "There", "is", "are", "It", "They", "at", ".",
        "moving", "stopped",
    ]
    for category in CATEGORIES:
        words.extend(category.split("_"))
        words.extend(PLURALS[category].split(" "))
    words.extend(COLORS)
    words.extend(SECTOR_WORDS)
    words.extend(COUNT_WORDS)
    return Vocabulary(words)


def tokenize(text: str) -> list[str]:
    """Whitespace split with sentence periods peeled into their own token."""
    out = []
    for word in text.split(" "):
        if word.endswith(".") and len(word) > 1:
            out.extend([word[:-1], "."])
        else:
            out.append(word)
    return out


def _box_params(center, size_wlh, yaw, velocity_xy) -> np.ndarray:
    return np.array([*center, *size_wlh, yaw, *velocity_xy], dtype=np.float64)


def _predictions_line(prompt_id: str, boxes: list[PredictedBox]) -> str:
    doc = {
        "prompt_id": prompt_id,
        "boxes": [
            {
                "center": list(b.center),
                "size_wlh": list(b.size_wlh),
                "yaw_rad": b.yaw,
                "velocity_xy": list(b.velocity_xy),
                "movement": b.movement.value,
                "score": b.score,
            }
            for b in boxes
        ],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


class DemoPipeline:
    """All run-level (prompt-independent) seeded components."""

    def __init__(self, seed: int):
        self.seed = seed
        self.vocab = demo_vocabulary()
        stub_stream = SplitMix64(child_seed(seed, 1))
        self.embed_w = stub_stream.uniform((9, QUERY_DIM))
        self.embed_b = stub_stream.uniform((QUERY_DIM,))
        self.adapter = Adapter.seeded(child_seed(seed, 2), QUERY_DIM, CONTEXT_DIM)
        self.context_query = SplitMix64(child_seed(seed, 3)).uniform((CONTEXT_DIM,))
        self.projection = ProjectionPair.seeded(child_seed(seed, 4), QUERY_DIM, CONTEXT_DIM, QUERY_DIM)
        self.fuser_cfg = FuserConfig(k=8, heads=2, blocks=1, d=QUERY_DIM, seed=child_seed(seed, 5))
        self.box_head = BoxHead.seeded(child_seed(seed, 6), QUERY_DIM)
        self.lm_seed = child_seed(seed, 7)
        self.loss_cfg = LossConfig()

    def object_queries(self, record: PromptRecord, noise_seed: int) -> np.ndarray:
        """Detector stub: gt boxes through the fixed embedding map, plus noise rows."""
        noise = SplitMix64(noise_seed).uniform((N_QUERIES, QUERY_DIM), -NOISE_SCALE, NOISE_SCALE)
        rows = noise.copy()
        for i, box in enumerate(record.gt[:N_QUERIES]):
            params = _box_params(box.center, box.size_wlh, box.yaw, box.velocity_xy)
            rows[i] += params @ self.embed_w + self.embed_b
        return rows

    def run_prompt(self, record: PromptRecord, index: int):
        """One prompt through the full stack; returns (trace, boxes, loss report)."""
        with _stage("detector-stub"):
            queries = self.object_queries(record, child_seed(self.seed, 1000 + index))

        with _stage("token-protocol"):
            response = render_thinking_response(record.attribute_values, len(record.gt))
            schedule = [self.vocab.encode(t) for t in tokenize(response)]
            schedule.append(self.vocab.eos_id)
            text_ids = [self.vocab.encode(t) for t in tokenize(record.text)]
            lm = ScriptedToyLM(
                seed=self.lm_seed,
                hidden_dim=CONTEXT_DIM,
                vocab=self.vocab,
                schedule=schedule,
                base_len=N_QUERIES + len(text_ids),
            )
            text_embeddings = np.array([lm.embed(t) for t in text_ids])
            x_m = build_multimodal_input(queries, self.adapter, text_embeddings)
            trace = run_aggregation(lm, x_m, self.context_query, max_steps=len(schedule) + 4)

        with _stage("fusion"):
            sims = similarity(queries, trace.aggregated_context, self.projection)
            selected = select_top_k(queries, sims, self.fuser_cfg.k)
            fused = fuse(selected, queries, trace.aggregated_context, self.fuser_cfg)
            boxes = decode_boxes(fused, self.box_head)

        with _stage("losses"):
            logits = np.stack([lm.readout(h) for h in trace.step_hiddens])
            l_txt = text_ce(logits, trace.tokens, trace.loss_mask)
            detection = det_loss(boxes, record.gt)
            all_decoded = decode_boxes(queries, self.box_head)
            targets = [
                1
                if any(
                    math.hypot(d.center[0] - g.center[0], d.center[1] - g.center[1]) <= 2.0
                    for g in record.gt
                )
                else 0
                for d in all_decoded
            ]
            l_c = contrastive_loss(sims, targets)
            report = total_loss(l_txt, detection, l_c, self.loss_cfg)
        return trace, boxes, report


def run_demo(scenes: list[Scene], seed: int, out_dir: str) -> dict:
    """Generate, ground, decode and evaluate; writes the six output files."""
    os.makedirs(out_dir, exist_ok=True)

    with _stage("generate"):
        prompt_sink = StringIO()
        generate_dataset(scenes, (1, 2, 3, 4), prompt_sink)
        prompt_text = prompt_sink.getvalue()
        records = list(iter_records(StringIO(prompt_text), where="<generated>"))
        if not records:
            raise ToolkitError("scenes produced no prompts")

    pipeline = DemoPipeline(seed)
    trace_lines = []
    pred_lines = []
    predictions: dict[str, list[PredictedBox]] = {}
    txt_terms, det_terms, c_terms = [], [], []
    for index, record in enumerate(records):
        trace, boxes, report = pipeline.run_prompt(record, index)
        trace_lines.append(json.dumps(trace.to_dict(), separators=(",", ":"), ensure_ascii=False))
        pred_lines.append(_predictions_line(record.prompt_id, boxes))
        predictions[record.prompt_id] = boxes
        txt_terms.append(report.l_txt)
        det_terms.append(report.l_det)
        c_terms.append(report.l_c)

    with _stage("losses"):
        mean_report = total_loss(
            float(np.mean(txt_terms)), float(np.mean(det_terms)), float(np.mean(c_terms)),
            pipeline.loss_cfg,
        )
    with _stage("evaluate"):
        metrics = evaluate_records(records, predictions, EvalConfig())

    with _stage("write"):
        atomic_write_text(os.path.join(out_dir, "prompts.jsonl"), prompt_text)
        atomic_write_text(os.path.join(out_dir, "traces.jsonl"), "\n".join(trace_lines) + "\n")
        atomic_write_text(os.path.join(out_dir, "predictions.jsonl"), "\n".join(pred_lines) + "\n")
        atomic_write_text(
            os.path.join(out_dir, "losses.json"),
            json.dumps(mean_report.to_dict(), indent=2) + "\n",
        )
        atomic_write_text(
            os.path.join(out_dir, "metrics.json"),
            json.dumps(metrics.to_dict(), indent=2) + "\n",
        )
        atomic_write_text(os.path.join(out_dir, "fuser.json"), pipeline.fuser_cfg.to_json() + "\n")
    return {"prompts": len(records), "nds": metrics.nds}
