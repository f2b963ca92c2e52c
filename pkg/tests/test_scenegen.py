"""Procedural scene generation and the JSON spec format."""
import numpy as np
import pytest

from bouncelidar import (
    Mirror,
    Panel,
    Ray,
    SceneGenError,
    SceneSpecError,
    build_scene,
    empty_room_scene,
    generate_scene,
    hidden_cube_scene,
    intersect_ray,
    scene_from_json,
    scene_to_json,
    trace_spots,
    validate_spec,
)
from bouncelidar.scenegen import MAX_OBJECTS

from helpers import TIE_EPS


def test_generation_is_seed_deterministic():
    _, _, a = generate_scene(123, n_x=16, n_y=16)
    _, _, b = generate_scene(123, n_x=16, n_y=16)
    assert scene_to_json(a) == scene_to_json(b)
    _, _, c = generate_scene(124, n_x=16, n_y=16)
    assert scene_to_json(a) != scene_to_json(c)


def test_json_round_trip_is_byte_identical():
    _, _, spec = generate_scene(7, n_x=16, n_y=16)
    text = scene_to_json(spec)
    again = scene_to_json(scene_from_json(text))
    assert again == text
    rebuilt, rig = build_scene(scene_from_json(text))
    assert rig.camera.n_x == 16
    assert len(rebuilt.objects) == len(spec["objects"])


def test_seed_sweep_respects_documented_ranges():
    for seed in range(40):
        scene, rig, spec = generate_scene(seed, n_x=8, n_y=8,
                                          spot_grid=(3, 3))
        hi = np.asarray(spec["room"]["hi"])
        assert 3.6 <= hi[0] <= 4.8
        assert 3.4 <= hi[1] <= 4.6
        assert 2.5 <= hi[2] <= 3.0
        assert np.all(np.asarray(spec["room"]["lo"]) == 0.0)
        assert rig.n_spots == 9
        assert not scene.contains(rig.camera.position[None])[0]
        validate_spec(spec)


def test_default_contents_and_mirror_flush():
    scene, rig, spec = generate_scene(3, n_x=8, n_y=8)
    kinds = sorted(o["kind"] for o in spec["objects"])
    assert kinds == ["box", "cylinder", "panel"]
    mirrors = [o for o in scene.objects
               if isinstance(o, Panel) and isinstance(o.material, Mirror)]
    assert len(mirrors) == 1
    m = mirrors[0]
    corners = np.stack([m.origin, m.origin + m.edge_u, m.origin + m.edge_v,
                        m.origin + m.edge_u + m.edge_v])
    room_lo, room_hi = scene.room.lo, scene.room.hi
    pinned = [a for a in range(3)
              if np.ptp(corners[:, a]) < 1e-9
              and (abs(corners[0, a] - room_lo[a]) < 1e-6
                   or abs(corners[0, a] - room_hi[a]) < 1e-6)]
    assert len(pinned) == 1


def test_spots_land_on_scene_surfaces():
    for seed in (0, 5, 9):
        scene, rig, spec = generate_scene(seed, n_x=8, n_y=8,
                                          spot_grid=(3, 3))
        spots = trace_spots(scene, rig)
        for p in spots.point:
            d = (p - rig.laser_pos) / np.linalg.norm(p - rig.laser_pos)
            hit = intersect_ray(scene, Ray(rig.laser_pos, d))
            assert hit is not None
            assert np.linalg.norm(hit.point - p) < 1e-9


def test_include_mirror_false():
    scene, rig, spec = generate_scene(11, n_x=8, n_y=8, include_mirror=False)
    assert all(o["kind"] != "panel" for o in spec["objects"])
    assert not any(isinstance(getattr(o, "material", None), Mirror)
                   for o in scene.objects)


def test_object_count_cap():
    with pytest.raises(SceneGenError):
        generate_scene(0, n_boxes=MAX_OBJECTS, n_cylinders=1)
    scene, rig, spec = generate_scene(1, n_x=8, n_y=8, n_boxes=2,
                                      n_cylinders=2)
    assert sum(o["kind"] in ("box", "cylinder") for o in spec["objects"]) == 4


def test_spec_validation_errors():
    _, _, spec = generate_scene(2, n_x=8, n_y=8)
    missing = {k: v for k, v in spec.items() if k != "room"}
    with pytest.raises(SceneSpecError):
        validate_spec(missing)
    bad_albedo = scene_from_json(scene_to_json(spec))
    bad_albedo["objects"][0]["material"]["albedo"] = 1.5
    with pytest.raises(SceneSpecError):
        build_scene(bad_albedo)
    unknown = scene_from_json(scene_to_json(spec))
    unknown["objects"][0]["kind"] = "torus"
    with pytest.raises(SceneSpecError):
        build_scene(unknown)


def test_empty_room_scene_is_empty():
    scene, rig, spec = empty_room_scene(8, 8, spot_grid=(2, 2))
    assert spec["objects"] == []
    assert scene.objects == []
    assert rig.n_spots == 4


def test_hidden_cube_is_invisible_to_camera(hidden32):
    b = hidden32
    box = b.spec["objects"][1]
    b_lo, b_hi = np.asarray(box["lo"]), np.asarray(box["hi"])
    dirs = b.rig.camera.pixel_dirs().reshape(-1, 3)
    for d in dirs:
        hit = intersect_ray(b.scene, Ray(b.rig.camera.position, d))
        assert hit is not None
        inside = np.all(hit.point >= b_lo - TIE_EPS) \
            and np.all(hit.point <= b_hi + TIE_EPS)
        assert not inside
    # yet it shadows at least one (spot, pixel) pair
    assert (~b.gt.masks).sum() > 0
