import numpy as np
import pytest

from cylsfm.camera import CylCamera
from cylsfm import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cam():
    return CylCamera(16, 8)


@pytest.fixture
def toy_scene():
    return synthetic.CylinderScene.make(radius=5.0, seed=11)


@pytest.fixture
def smooth_scene():
    return synthetic.CylinderScene.make(radius=5.0, seed=2, max_freq=3)
