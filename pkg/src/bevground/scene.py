"""Scene data model: annotated driving frames and ego-frame geometry.

A scene file is a single JSON document (UTF-8, one scene per file):

    {"scene_id": str,
     "frames": [{"frame_id": str,
                 "timestamp_us": int,
                 "ego_pose": {"translation": [x, y, z], "yaw_rad": f},
                 "instances": [{"instance_id": str, "category": str,
                                "center": [x, y, z], "size_wlh": [w, l, h],
                                "yaw_rad": f, "color": str|null}]}]}

Loading is strict: malformed or invariant-violating input is rejected with
an error naming the offending element; nothing is silently repaired. All
loaded values are immutable, so scenes can be shared freely across threads.

Coordinate conventions (fixed for the whole toolkit): the global frame and
the ego frame are right-handed with x forward along the heading, y left,
z up; ego rotation is a single planar yaw about z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError

CATEGORIES = (
    "car",
    "truck",
    "bus",
    "trailer",
    "construction_vehicle",
    "pedestrian",
    "motorcycle",
    "bicycle",
    "barrier",
    "traffic_cone",
)

COLORS = (
    "white",
    "black",
    "silver",
    "gray",
    "red",
    "blue",
    "green",
    "yellow",
    "orange",
    "brown",
)


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class EgoPose:
    """Ego vehicle pose in the global frame; yaw is normalized to (-pi, pi]."""

    translation: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.translation):
            raise ValidationError("ego translation must be finite")
        if not math.isfinite(self.yaw):
            raise ValidationError("ego yaw must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True)
class InstanceAnnotation:
    """One annotated object in one frame (global-frame box plus optional color)."""

    instance_id: str
    category: str
    center: tuple[float, float, float]
    size_wlh: tuple[float, float, float]
    yaw: float
    color: str | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValidationError(f"unknown category {self.category!r}")
        if not all(s > 0.0 for s in self.size_wlh):
            raise ValidationError("size_wlh must be strictly positive")
        if not all(math.isfinite(v) for v in self.center):
            raise ValidationError("center must be finite")
        if not math.isfinite(self.yaw):
            raise ValidationError("yaw must be finite")
        if self.color is not None and self.color not in COLORS:
            raise ValidationError(f"unknown color {self.color!r}")


@dataclass(frozen=True)
class SceneFrame:
    frame_id: str
    timestamp_us: int
    ego_pose: EgoPose
    instances: tuple[InstanceAnnotation, ...]

    def __post_init__(self):
        ids = [inst.instance_id for inst in self.instances]
        if len(ids) != len(set(ids)):
            raise ValidationError("duplicate instance_id within frame")


@dataclass(frozen=True)
class Scene:
    scene_id: str
    frames: tuple[SceneFrame, ...]

    def __post_init__(self):
        if not self.frames:
            raise ValidationError("scene must contain at least one frame")
        frame_ids = [f.frame_id for f in self.frames]
        if len(frame_ids) != len(set(frame_ids)):
            raise ValidationError("duplicate frame_id within scene")
        stamps = [f.timestamp_us for f in self.frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValidationError("timestamps must be strictly increasing")


def _require(obj: dict, key: str, kind, path: str):
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", path)
    if key not in obj:
        raise ParseError(f"missing field {key!r}", path)
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"field {key!r} must be a number", f"{path}.{key}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"field {key!r} must be an integer", f"{path}.{key}")
        return value
    if not isinstance(value, kind):
        raise ParseError(f"field {key!r} has wrong type", f"{path}.{key}")
    return value


def _vec3(obj: dict, key: str, path: str) -> tuple[float, float, float]:
    raw = _require(obj, key, list, path)
    if len(raw) != 3 or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw):
        raise ParseError(f"field {key!r} must be a list of 3 numbers", f"{path}.{key}")
    return (float(raw[0]), float(raw[1]), float(raw[2]))


def _validated(factory, path: str):
    try:
        return factory()
    except ValidationError as exc:
        raise ValidationError(exc.message, path) from None


def scene_from_dict(doc: dict, path: str = "$") -> Scene:
    scene_id = _require(doc, "scene_id", str, path)
    frames_raw = _require(doc, "frames", list, path)
    frames = []
    for i, frame_doc in enumerate(frames_raw):
        fpath = f"{path}.frames[{i}]"
        frame_id = _require(frame_doc, "frame_id", str, fpath)
        timestamp = _require(frame_doc, "timestamp_us", int, fpath)
        pose_doc = _require(frame_doc, "ego_pose", dict, fpath)
        pose = _validated(
            lambda: EgoPose(
                translation=_vec3(pose_doc, "translation", f"{fpath}.ego_pose"),
                yaw=_require(pose_doc, "yaw_rad", float, f"{fpath}.ego_pose"),
            ),
            f"{fpath}.ego_pose",
        )
        instances = []
        for j, inst_doc in enumerate(_require(frame_doc, "instances", list, fpath)):
            ipath = f"{fpath}.instances[{j}]"
            if not isinstance(inst_doc, dict) or "color" not in inst_doc:
                raise ParseError("missing field 'color' (use null for uncolored)", ipath)
            color = inst_doc["color"]
            if color is not None and not isinstance(color, str):
                raise ParseError("field 'color' must be a string or null", f"{ipath}.color")
            instances.append(
                _validated(
                    lambda: InstanceAnnotation(
                        instance_id=_require(inst_doc, "instance_id", str, ipath),
                        category=_require(inst_doc, "category", str, ipath),
                        center=_vec3(inst_doc, "center", ipath),
                        size_wlh=_vec3(inst_doc, "size_wlh", ipath),
                        yaw=_require(inst_doc, "yaw_rad", float, ipath),
                        color=color,
                    ),
                    ipath,
                )
            )
        frames.append(
            _validated(
                lambda: SceneFrame(
                    frame_id=frame_id,
                    timestamp_us=timestamp,
                    ego_pose=pose,
                    instances=tuple(instances),
                ),
                fpath,
            )
        )
    return _validated(lambda: Scene(scene_id=scene_id, frames=tuple(frames)), path)


def load_scene(path: str) -> Scene:
    """Load and validate one scene file; rejects rather than repairs bad input."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", str(path)) from None
    return scene_from_dict(doc, path=str(path))


def scene_to_dict(scene: Scene) -> dict:
    """Inverse of ``scene_from_dict``; round-trips to a structurally equal scene."""
    return {
        "scene_id": scene.scene_id,
        "frames": [
            {
                "frame_id": f.frame_id,
                "timestamp_us": f.timestamp_us,
                "ego_pose": {
                    "translation": list(f.ego_pose.translation),
                    "yaw_rad": f.ego_pose.yaw,
                },
                "instances": [
                    {
                        "instance_id": inst.instance_id,
                        "category": inst.category,
                        "center": list(inst.center),
                        "size_wlh": list(inst.size_wlh),
                        "yaw_rad": inst.yaw,
                        "color": inst.color,
                    }
                    for inst in f.instances
                ],
            }
            for f in scene.frames
        ],
    }


def to_ego_frame(pose: EgoPose, point) -> np.ndarray:
    """Map a global-frame point into the ego frame (x forward, y left, z up).

    The transform subtracts the ego translation, then rotates by -yaw about z.
    """
    p = np.asarray(point, dtype=np.float64) - np.asarray(pose.translation, dtype=np.float64)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return np.array([c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]])
