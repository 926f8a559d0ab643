import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bevground.scene import Scene, load_scene  # noqa: E402

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
SCENES_DIR = os.path.join(DATA_DIR, "scenes")
SCENES_FULL_DIR = os.path.join(DATA_DIR, "scenes_full")
GOLDEN_DIR = os.path.join(DATA_DIR, "golden")


@pytest.fixture(scope="session")
def fixture_scene() -> Scene:
    return load_scene(os.path.join(SCENES_DIR, "scene_alpha.json"))


@pytest.fixture(scope="session")
def full_scene() -> Scene:
    return load_scene(os.path.join(SCENES_FULL_DIR, "scene_full.json"))
