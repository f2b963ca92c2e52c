"""Scene specifications and procedural room generation.

A scene spec is a plain JSON-compatible dict validated against a shipped
schema. Specs are the canonical exchange format: `build_scene` turns a
spec into live geometry plus a capture rig, `scene_to_json` serializes
deterministically (sorted keys), and generated specs round-trip losslessly
because steering directions are stored explicitly rather than re-derived
from the random seed.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema
import numpy as np

from .geometry import (Box, Cylinder, Diffuse, Mirror, Panel, Room, Scene,
                       Sphere, intersect_rays, unit)
from .rig import CameraPose, LidarRig, look_at_rotation, spot_grid_dirs

MAX_OBJECTS = 8
_PLACEMENT_ATTEMPTS = 200
_SPOT_RETRIES = 40
_FLOOR_LIFT = 1e-3


class SceneSpecError(ValueError):
    """Spec fails schema validation or semantic checks."""


class SceneGenError(RuntimeError):
    """Procedural placement could not satisfy its constraints."""


def _schema():
    text = resources.files("bouncelidar.schemas").joinpath(
        "scene.schema.json").read_text()
    return json.loads(text)


def validate_spec(spec):
    try:
        jsonschema.validate(spec, _schema())
    except jsonschema.ValidationError as exc:
        raise SceneSpecError(f"invalid scene spec: {exc.message}") from exc


def scene_to_json(spec):
    """Deterministic serialization: sorted keys, two-space indent."""
    validate_spec(spec)
    return json.dumps(spec, sort_keys=True, indent=2) + "\n"


def scene_from_json(text):
    spec = json.loads(text)
    validate_spec(spec)
    return spec


def _vec(x):
    return [float(v) for v in np.asarray(x, dtype=np.float64)]


def _material_from(spec):
    if spec["kind"] == "mirror":
        return Mirror()
    return Diffuse(albedo=spec["albedo"])


def _object_from(spec):
    kind = spec["kind"]
    mat = _material_from(spec["material"])
    if kind == "box":
        return Box(spec["lo"], spec["hi"], mat)
    if kind == "sphere":
        return Sphere(spec["center"], spec["radius"], mat)
    if kind == "cylinder":
        return Cylinder(spec["base"], spec["axis"], spec["height"],
                        spec["radius"], mat)
    if kind == "panel":
        return Panel(spec["origin"], spec["edge_u"], spec["edge_v"], mat)
    raise SceneSpecError(f"unknown object kind {kind!r}")


def build_scene(spec):
    """Instantiate (Scene, LidarRig) from a validated spec dict."""
    validate_spec(spec)
    room = Room(spec["room"]["lo"], spec["room"]["hi"],
                dict(spec["room"]["wall_albedo"]))
    objects = [_object_from(o) for o in spec["objects"]]
    scene = Scene(room, objects)
    cam_spec = spec["camera"]
    rotation = look_at_rotation(cam_spec["forward"],
                                cam_spec.get("up", (0.0, 0.0, 1.0)))
    camera = CameraPose(cam_spec["position"], rotation, cam_spec["fov_deg"],
                        cam_spec["n_x"], cam_spec["n_y"])
    rig = LidarRig(camera, spec["laser"]["position"],
                   np.asarray(spec["spots"]["dirs"], dtype=np.float64))
    return scene, rig


def _camera_spec(position, forward, fov_deg, n_x, n_y):
    return {
        "position": _vec(position),
        "forward": _vec(unit(np.asarray(forward, dtype=np.float64))),
        "up": [0.0, 0.0, 1.0],
        "fov_deg": float(fov_deg),
        "n_x": int(n_x),
        "n_y": int(n_y),
    }


def _default_wall_albedo():
    return {k: 0.7 for k in ("x-", "x+", "y-", "y+", "z-", "z+")}


def _spot_spec(camera, n_u, n_v, span, jitter, rng):
    dirs = spot_grid_dirs(camera, n_u, n_v, span=span, jitter=jitter, rng=rng)
    return {"dirs": [_vec(d) for d in dirs]}


def _steered_spot_spec(scene, laser_pos, camera, n_u, n_v, span, jitter, rng):
    """Steering directions whose rays land on the room shell.

    A calibrated rig projects its spot pattern onto the static walls and
    floor; a direction whose ray first strikes a movable object would waste
    that spot on a surface that lights almost nothing, so it is re-jittered
    with growing amplitude until it clears. Mirror panels stay legitimate
    targets since a spot on a mirror re-emerges as a virtual source.
    """
    th = camera.tan_half_fov
    xs = np.linspace(-span, span, n_u) * th
    ys = np.linspace(-span, span, n_v) * th * camera.aspect
    gx, gy = np.meshgrid(xs, ys)
    origin = np.asarray(laser_pos, dtype=np.float64)[None, :]
    n_objects = len(scene.objects)
    dirs = []
    for bx, by in np.stack([gx.ravel(), gy.ravel()], axis=-1):
        chosen = None
        for attempt in range(_SPOT_RETRIES):
            widen = 2.0 * span * (attempt / (_SPOT_RETRIES - 1.0)) ** 2
            amp = (jitter or 0.0) * (1.0 + 0.5 * attempt) + widen
            off = rng.uniform(-amp, amp, 2) * th
            cand = unit(np.array([bx + off[0], by + off[1], 1.0]))
            world = camera.rotation @ cand
            _, _, idx = intersect_rays(scene, origin, world[None, :])
            hit = int(idx[0])
            if hit >= n_objects or (hit >= 0 and isinstance(
                    scene.primitives[hit].material, Mirror)):
                chosen = world
                break
        if chosen is None:
            raise SceneGenError(
                "could not steer a spot onto the room shell; objects block "
                "the steering cone")
        dirs.append(chosen)
    return {"dirs": [_vec(d) for d in dirs]}


def _aabb_overlap(lo_a, hi_a, lo_b, hi_b, gap):
    return np.all(np.asarray(hi_a) + gap > np.asarray(lo_b)) and \
        np.all(np.asarray(hi_b) + gap > np.asarray(lo_a))


def _place_footprint(rng, room_lo, room_hi, size_xy, keepouts, min_cam_x,
                     what):
    """Axis-aligned floor placement by rejection sampling.

    keepouts is a list of (lo, hi) AABBs the new footprint must stay clear
    of; min_cam_x keeps objects out of the camera's immediate surroundings.
    """
    margin = 0.05
    for _ in range(_PLACEMENT_ATTEMPTS):
        x0 = rng.uniform(max(room_lo[0] + margin, min_cam_x),
                         room_hi[0] - margin - size_xy[0])
        y0 = rng.uniform(room_lo[1] + margin,
                         room_hi[1] - margin - size_xy[1])
        lo = np.array([x0, y0, room_lo[2] + _FLOOR_LIFT])
        hi = lo + np.array([size_xy[0], size_xy[1], 0.0])
        if all(not _aabb_overlap(lo, hi, klo, khi, gap=0.08)
               for klo, khi in keepouts):
            return lo
    raise SceneGenError(
        f"could not place {what}: clearance from existing objects and the "
        f"camera region not achievable in {_PLACEMENT_ATTEMPTS} attempts")


def _mirror_panel_spec(rng, room_lo, room_hi, wall):
    """A flat mirror flush against one of the far or side walls."""
    width = rng.uniform(0.8, 1.3)
    height = rng.uniform(0.8, 1.2)
    z0 = rng.uniform(room_lo[2] + 0.2,
                     max(room_lo[2] + 0.21, room_hi[2] - 0.2 - height))
    if wall == "x+":
        y0 = rng.uniform(room_lo[1] + 0.2, room_hi[1] - 0.2 - width)
        origin = [float(room_hi[0]), float(y0 + width), float(z0)]
        edge_u = [0.0, -float(width), 0.0]
        edge_v = [0.0, 0.0, float(height)]
    elif wall == "y-":
        x0 = rng.uniform(room_lo[0] + 0.6, room_hi[0] - 0.2 - width)
        origin = [float(x0), float(room_lo[1]), float(z0)]
        edge_u = [0.0, 0.0, float(height)]
        edge_v = [float(width), 0.0, 0.0]
    elif wall == "y+":
        x0 = rng.uniform(room_lo[0] + 0.6, room_hi[0] - 0.2 - width)
        origin = [float(x0), float(room_hi[1]), float(z0)]
        edge_u = [float(width), 0.0, 0.0]
        edge_v = [0.0, 0.0, float(height)]
    else:
        raise SceneGenError(f"unsupported mirror wall {wall!r}")
    return {"kind": "panel", "origin": origin, "edge_u": edge_u,
            "edge_v": edge_v, "material": {"kind": "mirror"}}


def generate_scene(seed, *, n_x=64, n_y=64, fov_deg=90.0, n_boxes=1,
                   n_cylinders=1, include_mirror=True, spot_grid=(5, 5),
                   spot_span=0.55, spot_jitter=0.02):
    """Procedurally sample a furnished room.

    The camera sits near the x- wall looking down +x with the laser a few
    centimeters away. Objects rest on the floor; an optional flat mirror
    hangs flush on the far or a side wall. Returns (scene, rig, spec) where
    spec rebuilds the same scene via build_scene.
    """
    if n_boxes + n_cylinders + int(include_mirror) > MAX_OBJECTS:
        raise SceneGenError(f"object count exceeds the cap of {MAX_OBJECTS}")
    rng = np.random.default_rng(seed)
    room_lo = np.array([0.0, 0.0, 0.0])
    room_hi = np.array([rng.uniform(3.6, 4.8), rng.uniform(3.4, 4.6),
                        rng.uniform(2.5, 3.0)])
    wall_albedo = _default_wall_albedo()
    for key in wall_albedo:
        wall_albedo[key] = float(np.round(rng.uniform(0.5, 0.85), 4))

    cam_pos = np.array([
        0.18,
        rng.uniform(0.35 * room_hi[1], 0.65 * room_hi[1]),
        rng.uniform(1.1, 1.5),
    ])
    target = np.array([room_hi[0],
                       rng.uniform(0.4 * room_hi[1], 0.6 * room_hi[1]),
                       rng.uniform(0.9, 1.4)])
    laser_pos = cam_pos + np.array([0.0, 0.06, -0.03])
    camera_spec = _camera_spec(cam_pos, target - cam_pos, fov_deg, n_x, n_y)

    # Keep objects away from the capture hardware and from each other.
    keepouts = [(cam_pos - 0.3, cam_pos + 0.3)]
    min_cam_x = cam_pos[0] + 0.5

    objects = []
    for i in range(n_boxes):
        size = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                         rng.uniform(0.4, 1.2)])
        lo = _place_footprint(rng, room_lo, room_hi, size[:2], keepouts,
                              min_cam_x, f"box {i}")
        hi = lo + size
        hi[2] = min(hi[2], room_hi[2] - 0.05)
        keepouts.append((lo, hi))
        objects.append({
            "kind": "box", "lo": _vec(lo), "hi": _vec(hi),
            "material": {"kind": "diffuse",
                         "albedo": float(np.round(rng.uniform(0.4, 0.9), 4))},
        })
    for i in range(n_cylinders):
        radius = rng.uniform(0.12, 0.3)
        height = rng.uniform(0.4, 1.3)
        lo = _place_footprint(rng, room_lo, room_hi,
                              np.array([2 * radius, 2 * radius]), keepouts,
                              min_cam_x, f"cylinder {i}")
        keepouts.append((lo, lo + np.array([2 * radius, 2 * radius, height])))
        base = lo + np.array([radius, radius, 0.0])
        objects.append({
            "kind": "cylinder", "base": _vec(base), "axis": [0.0, 0.0, 1.0],
            "height": float(height), "radius": float(radius),
            "material": {"kind": "diffuse",
                         "albedo": float(np.round(rng.uniform(0.4, 0.9), 4))},
        })
    if include_mirror:
        wall = ("x+", "y-", "y+")[int(rng.integers(3))]
        objects.append(_mirror_panel_spec(rng, room_lo, room_hi, wall))

    spec = {
        "version": 1,
        "seed": int(seed),
        "room": {"lo": _vec(room_lo), "hi": _vec(room_hi),
                 "wall_albedo": wall_albedo},
        "objects": objects,
        "camera": camera_spec,
        "laser": {"position": _vec(laser_pos)},
        "spots": None,
    }
    rotation = look_at_rotation(camera_spec["forward"])
    camera = CameraPose(camera_spec["position"], rotation, fov_deg, n_x, n_y)
    pre_scene = Scene(Room(room_lo, room_hi, wall_albedo),
                      [_object_from(o) for o in objects])
    spec["spots"] = _steered_spot_spec(pre_scene, laser_pos, camera,
                                       spot_grid[0], spot_grid[1], spot_span,
                                       spot_jitter, rng)
    scene, rig = build_scene(spec)
    return scene, rig, spec


def empty_room_scene(n_x=64, n_y=64, fov_deg=90.0, spot_grid=(5, 5),
                     spot_span=0.55):
    """A bare room for calibration work: no objects, centered camera."""
    spec = {
        "version": 1,
        "room": {"lo": [0.0, 0.0, 0.0], "hi": [4.0, 4.0, 3.0],
                 "wall_albedo": _default_wall_albedo()},
        "objects": [],
        "camera": _camera_spec([0.18, 2.0, 1.25], [1.0, 0.0, 0.0], fov_deg,
                               n_x, n_y),
        "laser": {"position": [0.18, 2.06, 1.22]},
        "spots": None,
    }
    camera = CameraPose(spec["camera"]["position"],
                        look_at_rotation(spec["camera"]["forward"]),
                        fov_deg, n_x, n_y)
    spec["spots"] = _spot_spec(camera, spot_grid[0], spot_grid[1], spot_span,
                               None, None)
    scene, rig = build_scene(spec)
    return scene, rig, spec


def hidden_cube_scene(n_x=64, n_y=64, fov_deg=70.0):
    """A room where a tall occluder hides a low cube from the camera.

    The cube is invisible along every camera ray but sits inside shadows
    cast by the steered spots, so shadow carving can recover it.
    """
    occluder = {
        "kind": "box", "lo": [2.1, 1.3, 0.001], "hi": [2.3, 2.7, 1.601],
        "material": {"kind": "diffuse", "albedo": 0.7},
    }
    hidden = {
        "kind": "box", "lo": [2.85, 1.75, 0.001], "hi": [3.35, 2.25, 0.501],
        "material": {"kind": "diffuse", "albedo": 0.6},
    }
    spec = {
        "version": 1,
        "room": {"lo": [0.0, 0.0, 0.0], "hi": [4.0, 4.0, 3.0],
                 "wall_albedo": _default_wall_albedo()},
        "objects": [occluder, hidden],
        "camera": _camera_spec([0.18, 2.0, 1.25], [1.0, 0.0, 0.0], fov_deg,
                               n_x, n_y),
        "laser": {"position": [0.18, 2.06, 1.22]},
        "spots": None,
    }
    camera = CameraPose(spec["camera"]["position"],
                        look_at_rotation(spec["camera"]["forward"]),
                        fov_deg, n_x, n_y)
    pre_scene = Scene(Room(spec["room"]["lo"], spec["room"]["hi"],
                           spec["room"]["wall_albedo"]),
                      [_object_from(o) for o in spec["objects"]])
    spec["spots"] = _steered_spot_spec(pre_scene, spec["laser"]["position"],
                                       camera, 5, 5, 0.62, None,
                                       np.random.default_rng(0))
    scene, rig = build_scene(spec)
    return scene, rig, spec
