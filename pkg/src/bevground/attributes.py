"""Per-instance attribute annotation: category, appearance, movement, relationship.

Movement is estimated from inter-frame BEV displacement. For a given frame the
velocity anchor is the next frame in which the instance appears (forward
difference); when the instance never appears again, the previous appearance is
used instead; an instance observed exactly once has no computable velocity and
is annotated Unknown. The moving/stopped boundary is 0.3 m/s, with the
boundary value itself classified Moving.

Relationship assigns one of six 60-degree BEV sectors around the ego vehicle.
Sector bounds are half-open and counter-clockwise-positive, measured from the
ego forward axis:

    Front      [-30,  30)      FrontLeft  [ 30,  90)     BackLeft  [ 90, 150)
    Back       [150, 210)      BackRight  [-150, -90)    FrontRight [-90, -30)

(The Back sector wraps through +/-180.) Every non-origin point lands in
exactly one sector; the exact ego-origin point is rejected as degenerate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DegenerateInput, InstanceNotFound
from .scene import COLORS, EgoPose, Scene, to_ego_frame

__all__ = [
    "COLORS",
    "MOVING_SPEED_THRESHOLD",
    "MovementState",
    "RelationshipSector",
    "AttributeSet",
    "estimate_velocity",
    "estimate_speed",
    "classify_movement",
    "sector_from_angle",
    "compute_relationship",
    "annotate_frame",
]

MOVING_SPEED_THRESHOLD = 0.3  # m/s


class MovementState(enum.Enum):
    MOVING = "moving"
    STOPPED = "stopped"
    UNKNOWN = "unknown"


class RelationshipSector(enum.Enum):
    FRONT = "front"
    FRONT_LEFT = "front_left"
    FRONT_RIGHT = "front_right"
    BACK = "back"
    BACK_LEFT = "back_left"
    BACK_RIGHT = "back_right"


@dataclass(frozen=True)
class AttributeSet:
    """The four grounding attributes of one instance in one frame.

    ``speed`` and ``velocity_xy`` are None exactly when movement is Unknown;
    ``appearance`` is None when the annotation carried no color.
    """

    category: str
    appearance: str | None
    movement: MovementState
    relationship: RelationshipSector
    speed: float | None
    velocity_xy: tuple[float, float] | None

    def __post_init__(self):
        if (self.speed is None) != (self.movement is MovementState.UNKNOWN):
            raise ValueError("speed must be absent exactly when movement is Unknown")
        if self.speed is not None:
            expected = classify_movement(self.speed)
            if expected is not self.movement:
                raise ValueError(f"movement {self.movement} inconsistent with speed {self.speed}")


def _occurrences(scene: Scene, instance_id: str) -> list[int]:
    return [
        i
        for i, frame in enumerate(scene.frames)
        if any(inst.instance_id == instance_id for inst in frame.instances)
    ]


def _center_xy(scene: Scene, frame_index: int, instance_id: str) -> tuple[float, float]:
    for inst in scene.frames[frame_index].instances:
        if inst.instance_id == instance_id:
            return inst.center[0], inst.center[1]
    raise InstanceNotFound(f"{instance_id!r} not in frame {frame_index}")


def estimate_velocity(scene: Scene, instance_id: str, frame_index: int) -> tuple[float, float] | None:
    """BEV velocity (vx, vy) in m/s, or None when only one observation exists."""
    if not 0 <= frame_index < len(scene.frames):
        raise IndexError(f"frame_index {frame_index} out of range")
    here = _center_xy(scene, frame_index, instance_id)
    occurrences = _occurrences(scene, instance_id)
    later = [i for i in occurrences if i > frame_index]
    earlier = [i for i in occurrences if i < frame_index]
    if later:
        other_index = later[0]
    elif earlier:
        other_index = earlier[-1]
    else:
        return None
    other = _center_xy(scene, other_index, instance_id)
    # Signed dt makes the backward-difference fallback come out with the
    # same orientation as the forward difference.
    dt = (scene.frames[other_index].timestamp_us - scene.frames[frame_index].timestamp_us) / 1e6
    return ((other[0] - here[0]) / dt, (other[1] - here[1]) / dt)


def estimate_speed(scene: Scene, instance_id: str, frame_index: int) -> float | None:
    """BEV speed in m/s, or None (Unknown) for single-observation instances."""
    velocity = estimate_velocity(scene, instance_id, frame_index)
    if velocity is None:
        return None
    return math.hypot(velocity[0], velocity[1])


def classify_movement(speed: float | None) -> MovementState:
    if speed is None:
        return MovementState.UNKNOWN
    if speed < 0.0:
        raise ValueError("speed must be nonnegative")
    return MovementState.MOVING if speed >= MOVING_SPEED_THRESHOLD else MovementState.STOPPED


_SECTOR_BOUNDS = (
    (-30.0, 30.0, RelationshipSector.FRONT),
    (30.0, 90.0, RelationshipSector.FRONT_LEFT),
    (90.0, 150.0, RelationshipSector.BACK_LEFT),
    (-90.0, -30.0, RelationshipSector.FRONT_RIGHT),
    (-150.0, -90.0, RelationshipSector.BACK_RIGHT),
)


def sector_from_angle(theta_deg: float) -> RelationshipSector:
    """Half-open sector lookup for a BEV bearing in degrees, (-180, 180]."""
    for low, high, sector in _SECTOR_BOUNDS:
        if low <= theta_deg < high:
            return sector
    return RelationshipSector.BACK  # [150, 210) wrapping through +/-180


def compute_relationship(pose: EgoPose, center) -> RelationshipSector:
    """Assign the 60-degree BEV sector containing the object, relative to the ego."""
    ego_pt = to_ego_frame(pose, center)
    x, y = float(ego_pt[0]), float(ego_pt[1])
    if x == 0.0 and y == 0.0:
        raise DegenerateInput("object center coincides with the ego origin")
    return sector_from_angle(math.degrees(math.atan2(y, x)))


def annotate_frame(scene: Scene, frame_index: int) -> dict[str, AttributeSet]:
    """Compute the AttributeSet of every instance in one frame; deterministic."""
    if not 0 <= frame_index < len(scene.frames):
        raise IndexError(f"frame_index {frame_index} out of range")
    frame = scene.frames[frame_index]
    out: dict[str, AttributeSet] = {}
    for inst in frame.instances:
        velocity = estimate_velocity(scene, inst.instance_id, frame_index)
        speed = None if velocity is None else math.hypot(velocity[0], velocity[1])
        out[inst.instance_id] = AttributeSet(
            category=inst.category,
            appearance=inst.color,
            movement=classify_movement(speed),
            relationship=compute_relationship(frame.ego_pose, inst.center),
            speed=speed,
            velocity_xy=velocity,
        )
    return out
