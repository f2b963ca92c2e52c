"""Session fixtures: a few small scenes rendered once and shared."""
import numpy as np
import pytest

from bouncelidar import empty_room_scene, hidden_cube_scene

from helpers import BOX_OBJECT, MIRROR_OBJECT, render_bundle, room_with_objects


@pytest.fixture(scope="session")
def empty16():
    scene, rig, spec = empty_room_scene(16, 16, spot_grid=(3, 3), spot_span=0.9)
    return render_bundle(scene, rig, spec)


@pytest.fixture(scope="session")
def box24():
    scene, rig, spec = room_with_objects([BOX_OBJECT])
    return render_bundle(scene, rig, spec)


@pytest.fixture(scope="session")
def mirror24():
    scene, rig, spec = room_with_objects([MIRROR_OBJECT])
    return render_bundle(scene, rig, spec)


@pytest.fixture(scope="session")
def hidden32():
    scene, rig, spec = hidden_cube_scene(32, 32)
    return render_bundle(scene, rig, spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
