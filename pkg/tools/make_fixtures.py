"""Author the synthetic scene fixtures committed under tests/data/.

Run from the repo root:  python tools/make_fixtures.py

scene_alpha: 10 frames, 6 instances each. The ego drives +x then turns
left onto +y. Object motion is linear with hand-picked speeds so the
movement labels are unambiguous (0, 0.2, 3, 4, 6 m/s); one instance
("ped_solo") appears in exactly one frame to exercise the Unknown movement
path, the truck carries no color, and the cone sits near the global origin.

scene_full: 3 frames, 4 instances, every instance fully attributed (color
present, observed in all frames), for the structural-statistics checks.
"""

import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.normpath(os.path.join(HERE, "..", "tests", "data"))

PI = math.pi
HALF_PI = math.pi / 2.0


def instance(iid, category, center, size, yaw, color):
    return {
        "instance_id": iid,
        "category": category,
        "center": list(center),
        "size_wlh": list(size),
        "yaw_rad": yaw,
        "color": color,
    }


def scene_alpha():
    frames = []
    for i in range(10):
        if i <= 6:
            translation = [2.5 * i, 0.0, 0.0]
            yaw = 0.0
        else:
            translation = [15.0, 2.5 * (i - 6), 0.0]
            yaw = HALF_PI
        instances = [
            instance("car_red", "car", (10.0 + 3.0 * i, 2.0, 0.75), (1.8, 4.5, 1.5), 0.0, "red"),
            instance("car_black", "car", (6.0, -4.0, 0.8), (1.9, 4.6, 1.6), HALF_PI, "black"),
            instance("bus_orange", "bus", (20.0 + 0.1 * i, 5.0, 1.6), (2.9, 11.0, 3.2), 0.0, "orange"),
            instance("truck_noc", "truck", (-5.0 - 2.0 * i, -3.0, 1.4), (2.5, 7.0, 2.8), PI, None),
            instance("bike_blue", "bicycle", (3.0, 8.0 + 1.5 * i, 0.6), (0.6, 1.8, 1.2), HALF_PI, "blue"),
        ]
        if i == 3:
            instances.append(
                instance("ped_solo", "pedestrian", (12.0, 1.0, 0.9), (0.6, 0.6, 1.8), 0.0, None)
            )
        else:
            instances.append(
                instance("cone_1", "traffic_cone", (1.0, 0.8, 0.4), (0.4, 0.4, 0.8), 0.0, "orange")
            )
        frames.append(
            {
                "frame_id": f"f{i:02d}",
                "timestamp_us": 1_000_000 + 500_000 * i,
                "ego_pose": {"translation": translation, "yaw_rad": yaw},
                "instances": instances,
            }
        )
    return {"scene_id": "scene_alpha", "frames": frames}


def scene_full():
    frames = []
    for i in range(3):
        frames.append(
            {
                "frame_id": f"f{i}",
                "timestamp_us": 1_000_000 + 1_000_000 * i,
                "ego_pose": {"translation": [0.0, 0.0, 0.0], "yaw_rad": 0.0},
                "instances": [
                    instance("car_w", "car", (5.0, 0.0, 0.75), (1.8, 4.5, 1.5), 0.0, "white"),
                    instance("car_w2", "car", (-5.0, 0.1, 0.75), (1.8, 4.5, 1.5), 0.0, "white"),
                    instance("bus_y", "bus", (1.0 * i, 6.0, 1.6), (2.9, 11.0, 3.2), 0.0, "yellow"),
                    instance("ped_g", "pedestrian", (0.0, -4.0, 0.9), (0.6, 0.6, 1.8), 0.0, "green"),
                ],
            }
        )
    return {"scene_id": "scene_full", "frames": frames}


def write(path, doc):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=1)
        handle.write("\n")
    print("wrote", path)


if __name__ == "__main__":
    write(os.path.join(DATA, "scenes", "scene_alpha.json"), scene_alpha())
    write(os.path.join(DATA, "scenes_full", "scene_full.json"), scene_full())
