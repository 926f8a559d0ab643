"""Hierarchical grounding-prompt generation and dataset statistics.

Prompts are generated from the 15 nonempty subsets of the four instance
attributes (category, appearance, movement, relationship). A template's
level is the size of its subset, so the 15 templates split 4/6/4/1 across
levels 1-4. Within a frame, every distinct combination of attribute values
realized by at least one instance yields exactly one prompt whose ground
truth is every instance sharing that combination; instances missing an
attribute (no color, or Unknown movement) are simply skipped by templates
that require it. This keeps each prompt's wording true of all and only its
ground-truth objects, so no template can be satisfied by reading a subset
of its attributes.

Output is deterministic end to end: canonical template ordering, canonical
value strings, canonical sort, and stable JSON serialization produce
byte-identical JSONL for identical input.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from itertools import combinations
from typing import IO, Iterable, Iterator

from .attributes import AttributeSet, MovementState, annotate_frame
from .errors import MissingValue, ParseError, ValidationError
from .scene import Scene

ATTRIBUTE_ORDER = ("category", "appearance", "movement", "relationship")

PLURALS = {
    "car": "cars",
    "truck": "trucks",
    "bus": "buses",
    "trailer": "trailers",
    "construction_vehicle": "construction vehicles",
    "pedestrian": "pedestrians",
    "motorcycle": "motorcycles",
    "bicycle": "bicycles",
    "barrier": "barriers",
    "traffic_cone": "traffic cones",
}


@dataclass(frozen=True)
class Template:
    """One attribute-combination template; level = number of attributes used."""

    template_id: int
    attribute_subset: tuple[str, ...]

    @property
    def level(self) -> int:
        return len(self.attribute_subset)


def enumerate_templates() -> list[Template]:
    """All 15 templates in canonical order: by subset size, then lexicographic
    over the fixed attribute order."""
    templates = []
    for size in range(1, 5):
        for subset in combinations(range(4), size):
            templates.append(
                Template(
                    template_id=len(templates),
                    attribute_subset=tuple(ATTRIBUTE_ORDER[i] for i in subset),
                )
            )
    return templates


def render_text(template: Template, values: dict[str, str]) -> str:
    """Deterministic surface sentence for a filled template.

    Slot order is movement, color, category (plural; "objects" when absent),
    then the relationship phrase. Example: "Please detect all the moving
    orange buses in the front left of the ego vehicle."
    """
    if set(values) != set(template.attribute_subset):
        missing = set(template.attribute_subset) - set(values)
        extra = set(values) - set(template.attribute_subset)
        raise MissingValue(f"values must cover exactly the template subset (missing={sorted(missing)}, extra={sorted(extra)})")
    words = ["Please", "detect", "all", "the"]
    if "movement" in values:
        words.append(values["movement"])
    if "appearance" in values:
        words.append(values["appearance"])
    if "category" in values:
        words.extend(PLURALS[values["category"]].split(" "))
    else:
        words.append("objects")
    if "relationship" in values:
        words.extend(["in", "the"])
        words.extend(values["relationship"].split("_"))
        words.extend(["of", "the", "ego", "vehicle"])
    return " ".join(words) + "."


@dataclass(frozen=True)
class GroundTruthBox:
    instance_id: str
    center: tuple[float, float, float]
    size_wlh: tuple[float, float, float]
    yaw: float
    velocity_xy: tuple[float, float]


@dataclass(frozen=True)
class PromptRecord:
    prompt_id: str
    scene_id: str
    frame_id: str
    template_id: int
    level: int
    attribute_values: dict[str, str]
    text: str
    gt: tuple[GroundTruthBox, ...]

    def __post_init__(self):
        if not self.gt:
            raise ValidationError("prompt record must reference at least one object")

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "scene_id": self.scene_id,
            "frame_id": self.frame_id,
            "template_id": self.template_id,
            "level": self.level,
            "attribute_values": dict(self.attribute_values),
            "text": self.text,
            "gt": [
                {
                    "instance_id": b.instance_id,
                    "center": list(b.center),
                    "size_wlh": list(b.size_wlh),
                    "yaw_rad": b.yaw,
                    "velocity_xy": list(b.velocity_xy),
                }
                for b in self.gt
            ],
        }


def value_string(subset: tuple[str, ...], values: dict[str, str]) -> str:
    """Canonical "attr=value" join in fixed attribute order; sort key and
    prompt_id component."""
    return ",".join(f"{attr}={values[attr]}" for attr in subset)


def _attribute_value(attrs: AttributeSet, attribute: str) -> str | None:
    if attribute == "category":
        return attrs.category
    if attribute == "appearance":
        return attrs.appearance
    if attribute == "movement":
        if attrs.movement is MovementState.UNKNOWN:
            return None
        return attrs.movement.value
    return attrs.relationship.value


def generate_frame_prompts(
    scene: Scene,
    frame_index: int,
    annotations: dict[str, AttributeSet],
    levels: Iterable[int] = (1, 2, 3, 4),
) -> list[PromptRecord]:
    """All prompt records for one frame, sorted by (template_id, value string)."""
    levels = set(levels)
    frame = scene.frames[frame_index]
    records: list[PromptRecord] = []
    for template in enumerate_templates():
        if template.level not in levels:
            continue
        buckets: dict[tuple[str, ...], list[GroundTruthBox]] = {}
        for inst in frame.instances:
            attrs = annotations[inst.instance_id]
            values = [_attribute_value(attrs, a) for a in template.attribute_subset]
            if any(v is None for v in values):
                continue
            box = GroundTruthBox(
                instance_id=inst.instance_id,
                center=inst.center,
                size_wlh=inst.size_wlh,
                yaw=inst.yaw,
                velocity_xy=attrs.velocity_xy if attrs.velocity_xy is not None else (0.0, 0.0),
            )
            buckets.setdefault(tuple(values), []).append(box)
        for key, boxes in buckets.items():
            values = dict(zip(template.attribute_subset, key))
            vstring = value_string(template.attribute_subset, values)
            records.append(
                PromptRecord(
                    prompt_id=f"{scene.scene_id}/{frame.frame_id}/{template.template_id}/{vstring}",
                    scene_id=scene.scene_id,
                    frame_id=frame.frame_id,
                    template_id=template.template_id,
                    level=template.level,
                    attribute_values=values,
                    text=render_text(template, values),
                    gt=tuple(boxes),
                )
            )
    records.sort(key=lambda r: (r.template_id, value_string(tuple(r.attribute_values), r.attribute_values)))
    return records


def dumps_record(record: PromptRecord) -> str:
    return json.dumps(record.to_dict(), separators=(",", ":"), ensure_ascii=False)


def scene_lines(scene: Scene, levels: Iterable[int]) -> list[str]:
    """One scene's JSONL lines, frames ordered by frame_id."""
    lines = []
    frame_order = sorted(range(len(scene.frames)), key=lambda i: scene.frames[i].frame_id)
    for frame_index in frame_order:
        annotations = annotate_frame(scene, frame_index)
        for record in generate_frame_prompts(scene, frame_index, annotations, levels):
            lines.append(dumps_record(record))
    return lines


def generate_dataset(scenes: Iterable[Scene], levels: Iterable[int], out: IO[str],
                     max_workers: int = 1) -> int:
    """Stream prompt records as JSONL, canonically ordered by
    (scene_id, frame_id, template_id, value string). Returns the record count.

    Scenes may be processed in parallel; the sink ordering is canonical
    either way, so the output bytes do not depend on the worker count.
    """
    levels = set(levels)
    ordered = sorted(scenes, key=lambda s: s.scene_id)
    count = 0
    if max_workers > 1 and len(ordered) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_scene = pool.map(lambda s: scene_lines(s, levels), ordered)
            for lines in per_scene:
                for line in lines:
                    out.write(line + "\n")
                    count += 1
    else:
        for scene in ordered:
            for line in scene_lines(scene, levels):
                out.write(line + "\n")
                count += 1
    return count


@dataclass(frozen=True)
class DatasetStats:
    prompt_count: int
    per_level: dict[int, int]
    prompts_per_frame_mean: float
    objects_per_prompt_hist: dict[int, int]
    objects_per_prompt_mean: float
    word_frequency: list[tuple[str, int]]

    def to_dict(self) -> dict:
        return {
            "prompt_count": self.prompt_count,
            "per_level": {str(k): self.per_level[k] for k in sorted(self.per_level)},
            "prompts_per_frame_mean": self.prompts_per_frame_mean,
            "objects_per_prompt": {
                "histogram": {str(k): self.objects_per_prompt_hist[k] for k in sorted(self.objects_per_prompt_hist)},
                "mean": self.objects_per_prompt_mean,
            },
            "word_frequency": [[w, c] for w, c in self.word_frequency],
        }


_WORD_SPLIT = re.compile(r"[^a-z0-9]+")


def compute_stats(records: Iterable[PromptRecord], frame_count: int) -> DatasetStats:
    """Aggregate counts over a record stream.

    Word frequency tokenizes prompt text as lowercase runs of alphanumerics;
    top-50 ties break alphabetically.
    """
    total = 0
    per_level = {1: 0, 2: 0, 3: 0, 4: 0}
    hist: dict[int, int] = {}
    objects_total = 0
    word_counts: dict[str, int] = {}
    for record in records:
        total += 1
        per_level[record.level] += 1
        n = len(record.gt)
        hist[n] = hist.get(n, 0) + 1
        objects_total += n
        for word in _WORD_SPLIT.split(record.text.lower()):
            if word:
                word_counts[word] = word_counts.get(word, 0) + 1
    top = sorted(word_counts.items(), key=lambda item: (-item[1], item[0]))[:50]
    return DatasetStats(
        prompt_count=total,
        per_level=per_level,
        prompts_per_frame_mean=total / frame_count if frame_count else 0.0,
        objects_per_prompt_hist=hist,
        objects_per_prompt_mean=objects_total / total if total else 0.0,
        word_frequency=top,
    )


def record_from_dict(doc: dict, path: str = "$") -> PromptRecord:
    """Parse one JSONL record dict back into a PromptRecord (strict)."""
    if not isinstance(doc, dict):
        raise ParseError("expected a JSON object", path)
    try:
        gt = tuple(
            GroundTruthBox(
                instance_id=b["instance_id"],
                center=tuple(b["center"]),
                size_wlh=tuple(b["size_wlh"]),
                yaw=float(b["yaw_rad"]),
                velocity_xy=tuple(b["velocity_xy"]),
            )
            for b in doc["gt"]
        )
        record = PromptRecord(
            prompt_id=doc["prompt_id"],
            scene_id=doc["scene_id"],
            frame_id=doc["frame_id"],
            template_id=int(doc["template_id"]),
            level=int(doc["level"]),
            attribute_values=dict(doc["attribute_values"]),
            text=doc["text"],
            gt=gt,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed prompt record: {exc}", path) from None
    if record.level != len(record.attribute_values):
        raise ValidationError("level does not match the number of attribute values", path)
    return record


def iter_records(handle: IO[str], where: str = "<prompts>") -> Iterator[PromptRecord]:
    """Parse a prompt JSONL stream, reporting the line number on failure."""
    for lineno, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", f"{where}:{lineno}") from None
        yield record_from_dict(doc, path=f"{where}:{lineno}")
