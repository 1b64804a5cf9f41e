import numpy as np
import pytest

from disklight.geometry import DiskLight, ShadingPoint, build_frames
from disklight.tabulation import build_table


@pytest.fixture(scope="session")
def reference_light() -> DiskLight:
    return DiskLight(center=(0.0, 1.5, 1.0), normal=(0.0, 0.0, -1.0), radius=1.0)


@pytest.fixture(scope="session")
def reference_frame(reference_light):
    """The pinned oblique configuration: origin viewer, offset tilted disk."""
    return build_frames(reference_light, ShadingPoint(position=(0.0, 0.0, 0.0)))


@pytest.fixture(scope="session")
def on_axis_frame():
    light = DiskLight(center=(0.0, 0.0, 1.0), normal=(0.0, 0.0, -1.0), radius=1.0)
    return build_frames(light, ShadingPoint(position=(0.0, 0.0, 0.0)))


@pytest.fixture(scope="session")
def coarse_table():
    return build_table((33, 33))


@pytest.fixture(scope="session")
def full_table():
    """Full-resolution shared table; built once, reused across modules."""
    from disklight.harness import default_table

    return default_table()


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))
