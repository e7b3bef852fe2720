import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import make_scene  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_scenes():
    """The randomized 20-scene corpus shared by consistency and CLI tests."""
    return [make_scene(seed=1000 + i, scene_id=f"synth{i:03d}") for i in range(20)]
