"""Shared builders and independent oracles for the test suite."""
import copy
from types import SimpleNamespace

import numpy as np

from bouncelidar import (
    Box,
    CubeConfig,
    Cylinder,
    DepthMap,
    Panel,
    Sphere,
    build_scene,
    collect_deposits,
    empty_room_scene,
    render_gbuffer,
    render_shadow_masks,
    render_transient,
    separation_mask,
    spot_image_paths,
    trace_spots,
    two_bounce_tof,
)

TIE_EPS = 1e-9    # scene intersection tie rule, kept in sync with geometry


def cfg_for(scene, delta=128e-12, policy="error"):
    """Cube config covering four room diagonals, like the CLI default."""
    reach = 4.0 * scene.room.diagonal
    return CubeConfig(delta=delta, n_t=1, gate_path_min=1.0,
                      oob_policy=policy).sized_for(reach, margin=1.0)


BOX_OBJECT = {
    "kind": "box", "lo": [2.2, 1.6, 0.001], "hi": [2.7, 2.4, 0.9],
    "material": {"kind": "diffuse", "albedo": 0.6},
}
MIRROR_OBJECT = {
    "kind": "panel", "origin": [4.0, 1.3, 0.45],
    "edge_u": [0.0, 0.0, 1.5], "edge_v": [0.0, 1.5, 0.0],
    "material": {"kind": "mirror"},
}


def room_with_objects(objects, n=24, spots=(3, 3), span=0.9):
    """Empty-room spec with extra objects spliced in, then rebuilt."""
    _, _, spec = empty_room_scene(n, n, spot_grid=spots, spot_span=span)
    spec = copy.deepcopy(spec)
    spec["objects"] = copy.deepcopy(objects)
    scene, rig = build_scene(spec)
    return scene, rig, spec


def render_bundle(scene, rig, spec=None):
    """Trace, render, and demux-prep a scene once for reuse across tests."""
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    cfg = cfg_for(scene)
    dep = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
    cube = render_transient(scene, rig, cfg, spots=spots, gbuffer=gb,
                            deposits=dep)
    gt = render_shadow_masks(scene, rig, spots=spots, gbuffer=gb, deposits=dep)
    depth = DepthMap(gb.depth, None)
    tof = two_bounce_tof(depth, rig, spots)
    img = spot_image_paths(scene, rig, spots=spots, gbuffer=gb)
    sep = separation_mask(tof, cube, extra_paths=img, specular=gb.specular)
    return SimpleNamespace(scene=scene, rig=rig, spec=spec, spots=spots,
                           gb=gb, cfg=cfg, dep=dep, cube=cube, gt=gt,
                           depth=depth, tof=tof, img=img, sep=sep)


# ---------------------------------------------------------------------------
# independent ray-intersection oracles
#
# Each primitive is handled by enumerating candidate surfaces directly: the
# six bounded faces of a box, the two quadratic roots of a sphere or a
# cylinder side plus its two cap discs, and the single bounded plane of a
# panel. This stays deliberately different from the slab/nearest-root code
# under test.

def _face_t(o, d, axis, bound, lo, hi):
    if abs(d[axis]) < 1e-15:
        return np.inf
    t = (bound - o[axis]) / d[axis]
    if t <= 0.0:
        return np.inf
    p = o + t * d
    for k in range(3):
        if k == axis:
            continue
        if p[k] < lo[k] - 1e-12 or p[k] > hi[k] + 1e-12:
            return np.inf
    return t


def oracle_box_t(prim, o, d):
    best = np.inf
    for axis in range(3):
        for bound in (prim.lo[axis], prim.hi[axis]):
            best = min(best, _face_t(o, d, axis, bound, prim.lo, prim.hi))
    return best


def oracle_sphere_t(prim, o, d):
    oc = o - prim.center
    b = float(np.dot(oc, d))
    c = float(np.dot(oc, oc)) - prim.radius ** 2
    disc = b * b - c
    if disc < 0.0:
        return np.inf
    root = np.sqrt(disc)
    for t in (-b - root, -b + root):
        if t > 0.0:
            return t
    return np.inf


def oracle_cylinder_t(prim, o, d):
    axis = prim.axis
    w = o - prim.base
    d_perp = d - np.dot(d, axis) * axis
    w_perp = w - np.dot(w, axis) * axis
    cands = []
    a = float(np.dot(d_perp, d_perp))
    if a > 1e-15:
        b = float(np.dot(w_perp, d_perp))
        c = float(np.dot(w_perp, w_perp)) - prim.radius ** 2
        disc = b * b - a * c
        if disc >= 0.0:
            root = np.sqrt(disc)
            for t in ((-b - root) / a, (-b + root) / a):
                if t > 0.0:
                    s = np.dot(w + t * d, axis)
                    if 0.0 <= s <= prim.height:
                        cands.append(t)
    dz = float(np.dot(d, axis))
    if abs(dz) > 1e-15:
        for s_cap in (0.0, prim.height):
            t = (s_cap - float(np.dot(w, axis))) / dz
            if t > 0.0:
                p = w + t * d
                radial = p - np.dot(p, axis) * axis
                if float(np.dot(radial, radial)) <= prim.radius ** 2:
                    cands.append(t)
    return min(cands) if cands else np.inf


def oracle_panel_t(prim, o, d):
    n = np.cross(prim.edge_u, prim.edge_v)
    n = n / np.linalg.norm(n)
    dn = float(np.dot(d, n))
    if abs(dn) < 1e-15:
        return np.inf
    t = float(np.dot(prim.origin - o, n)) / dn
    if t <= 0.0:
        return np.inf
    q = o + t * d - prim.origin
    alpha = float(np.dot(q, prim.edge_u)) / float(np.dot(prim.edge_u, prim.edge_u))
    beta = float(np.dot(q, prim.edge_v)) / float(np.dot(prim.edge_v, prim.edge_v))
    if -1e-12 <= alpha <= 1.0 + 1e-12 and -1e-12 <= beta <= 1.0 + 1e-12:
        return t
    return np.inf


def oracle_primitive_t(prim, o, d):
    if isinstance(prim, Box):
        return oracle_box_t(prim, o, d)
    if isinstance(prim, Sphere):
        return oracle_sphere_t(prim, o, d)
    if isinstance(prim, Cylinder):
        return oracle_cylinder_t(prim, o, d)
    if isinstance(prim, Panel):
        return oracle_panel_t(prim, o, d)
    raise TypeError(f"no oracle for {type(prim).__name__}")


def oracle_scene_hit(scene, o, d, t_min=0.0, t_max=np.inf):
    """Fold primitive hits in index order with the strict-improvement rule."""
    best_t, best_idx = np.inf, -1
    for idx, prim in enumerate(scene.primitives):
        t = oracle_primitive_t(prim, o, d)
        if t < t_min or t > t_max:
            continue
        if t < best_t - TIE_EPS:
            best_t, best_idx = t, idx
    return best_t, best_idx
