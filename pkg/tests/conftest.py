import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xflie.mission import run_mission  # noqa: E402
from xflie.scene import NoiseSpec  # noqa: E402
from xflie.worlds import generate_world  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@functools.lru_cache(maxsize=None)
def cached_mission(n_targets, seed, noisy=False, **config):
    world = generate_world(n_targets, seed)
    return run_mission(world, noise=NoiseSpec() if noisy else NoiseSpec.zero(), **config)


@pytest.fixture(scope="session")
def mission():
    return cached_mission


@pytest.fixture(scope="session")
def scenarios_dir():
    return ROOT / "scenarios"
