"""Primitives, scene intersection, visibility, and ellipsoid inversion."""
import numpy as np
import pytest

from bouncelidar import (
    Box,
    C_LIGHT,
    Cylinder,
    DegenerateGeometryError,
    Diffuse,
    GeometryError,
    InvalidSegmentError,
    Mirror,
    NoSolutionError,
    Panel,
    Ray,
    Room,
    Scene,
    Sphere,
    ellipsoid_depth,
    ellipsoid_depth_many,
    intersect_ray,
    intersect_rays,
    segments_clear,
    unit,
    visible,
)

from helpers import oracle_scene_hit


def oracle_scene():
    """One of each primitive kind, plus a wall-flush mirror panel."""
    room = Room(np.array([0.0, 0.0, 0.0]), np.array([4.0, 4.0, 3.0]))
    objects = (
        Box(np.array([2.2, 1.6, 0.2]), np.array([2.7, 2.4, 0.9]), Diffuse(0.6)),
        Sphere(np.array([1.2, 3.0, 1.0]), 0.4, Diffuse(0.5)),
        Cylinder(np.array([3.1, 0.9, 0.01]), np.array([0.0, 0.0, 1.0]),
                 1.4, 0.3, Diffuse(0.4)),
        Panel(np.array([4.0, 1.3, 0.45]), np.array([0.0, 0.0, 1.5]),
              np.array([0.0, 1.5, 0.0]), Mirror()),
        Panel(np.array([0.8, 2.0, 0.3]), np.array([0.6, 0.0, 0.0]),
              np.array([0.0, 0.0, 0.8]), Diffuse(0.8)),
    )
    return Scene(room, objects)


def test_unit_normalizes_and_rejects_zero():
    v = unit([3.0, 0.0, 4.0])
    assert np.allclose(v, [0.6, 0.0, 0.8])
    with pytest.raises(GeometryError):
        unit([0.0, 0.0, 0.0])


def test_speed_of_light_constant():
    assert C_LIGHT == 299_792_458.0


def test_sphere_intersection_known_values():
    scene = Scene(Room(np.zeros(3) - 10.0, np.zeros(3) + 10.0),
                  (Sphere(np.array([3.0, 0.0, 0.0]), 1.0, Diffuse(0.5)),))
    t, n, idx = intersect_rays(scene, np.zeros((1, 3)),
                               np.array([[1.0, 0.0, 0.0]]))
    assert np.isclose(t[0], 2.0)
    assert idx[0] == 0
    assert np.allclose(n[0], [-1.0, 0.0, 0.0])


def test_box_intersection_from_inside_returns_exit():
    scene = Scene(Room(np.zeros(3) - 10.0, np.zeros(3) + 10.0),
                  (Box(np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]),
                       Diffuse(0.5)),))
    t, n, idx = intersect_rays(scene, np.zeros((1, 3)),
                               np.array([[0.0, 1.0, 0.0]]))
    assert np.isclose(t[0], 1.0)
    assert idx[0] == 0


def test_cylinder_side_and_cap_hits():
    cyl = Cylinder(np.array([0.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]),
                   2.0, 0.5, Diffuse(0.5))
    scene = Scene(Room(np.zeros(3) - 10.0, np.zeros(3) + 10.0), (cyl,))
    # horizontal ray into the side
    t, n, idx = intersect_rays(scene, np.array([[-3.0, 0.0, 1.0]]),
                               np.array([[1.0, 0.0, 0.0]]))
    assert np.isclose(t[0], 2.5)
    assert np.allclose(n[0], [-1.0, 0.0, 0.0])
    # vertical ray into the top cap
    t, n, idx = intersect_rays(scene, np.array([[0.1, 0.0, 5.0]]),
                               np.array([[0.0, 0.0, -1.0]]))
    assert np.isclose(t[0], 3.0)
    assert np.allclose(n[0], [0.0, 0.0, 1.0])


def test_panel_requires_orthogonal_edges():
    with pytest.raises(GeometryError):
        Panel(np.zeros(3), np.array([1.0, 0.0, 0.0]),
              np.array([1.0, 1.0, 0.0]), Diffuse(0.5))


def test_room_walls_cover_faces_with_default_albedo():
    lo, hi = np.zeros(3), np.array([4.0, 4.0, 3.0])
    room = Room(lo, hi)
    center = np.array([2.0, 2.0, 1.5])
    panels = room.wall_panels()
    assert len(panels) == 6
    pinned = set()
    for p in panels:
        corners = np.array([p.origin, p.origin + p.edge_u, p.origin + p.edge_v,
                            p.origin + p.edge_u + p.edge_v])
        flat = [(ax, corners[0][ax]) for ax in range(3)
                if np.ptp(corners[:, ax]) == 0.0]
        assert len(flat) == 1
        ax, val = flat[0]
        assert val in (lo[ax], hi[ax])
        pinned.add((ax, val))
        assert p.material.albedo == 0.7
    assert len(pinned) == 6
    # rays from the center see every wall with a normal facing back
    scene = Scene(room, ())
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    t, n, idx = intersect_rays(scene, np.tile(center, (6, 1)), dirs)
    assert np.all(idx >= 0)
    assert np.all(np.einsum("ij,ij->i", n, dirs) < 0.0)


def test_room_rejects_unknown_albedo_key():
    with pytest.raises(GeometryError):
        Room(np.zeros(3), np.ones(3), wall_albedo={"x?": 0.5})


def test_scene_rejects_object_outside_room():
    room = Room(np.zeros(3), np.array([4.0, 4.0, 3.0]))
    with pytest.raises(GeometryError):
        Scene(room, (Box(np.array([3.5, 1.0, 1.0]), np.array([4.5, 2.0, 2.0]),
                         Diffuse(0.5)),))


def test_wall_flush_mirror_wins_tie_by_lower_index():
    scene = oracle_scene()
    origin = np.array([[1.0, 2.05, 1.2]])
    direction = unit([4.0, 2.05, 1.2] - origin[0])[None]
    t, n, idx = intersect_rays(scene, origin, direction)
    assert idx[0] == 3          # the mirror panel, not the x+ wall behind it
    assert isinstance(scene.primitives[3].material, Mirror)


def test_intersect_rays_matches_per_primitive_oracle(rng):
    scene = oracle_scene()
    n_rays = 2000
    lo, hi = scene.room.lo, scene.room.hi
    origins = lo + rng.random((n_rays, 3)) * (hi - lo)
    vecs = rng.normal(size=(n_rays, 3))
    dirs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    t, n, idx = intersect_rays(scene, origins, dirs)
    for k in range(n_rays):
        t_ref, idx_ref = oracle_scene_hit(scene, origins[k], dirs[k])
        assert idx[k] == idx_ref
        assert abs(t[k] - t_ref) <= 1e-9 * max(1.0, t_ref)
        assert np.isclose(np.linalg.norm(n[k]), 1.0)
        assert np.dot(n[k], dirs[k]) < 0.0


def test_intersect_ray_respects_t_max():
    scene = oracle_scene()
    ray = Ray(np.array([2.0, 2.0, 1.5]), np.array([0.0, 0.0, 1.0]),
              t_max=1e-6)
    assert intersect_ray(scene, ray) is None
    hit = intersect_ray(scene, Ray(np.array([2.0, 2.0, 1.5]),
                                   np.array([0.0, 0.0, 1.0])))
    assert hit is not None
    assert np.isclose(hit.distance, 1.5)
    assert hit.prim_index >= 0


def test_ray_validation():
    with pytest.raises(GeometryError):
        Ray(np.zeros(3), np.array([1.0, 1.0, 0.0]))     # not unit
    with pytest.raises(GeometryError):
        Ray(np.zeros(3), np.array([1.0, 0.0, 0.0]), t_min=2.0, t_max=1.0)


def test_segments_clear_and_blocked(box24):
    scene = box24.scene
    a = np.array([[0.5, 2.0, 0.45], [0.5, 0.2, 2.8]])
    b = np.array([[3.9, 2.0, 0.45], [3.9, 3.8, 2.8]])
    clear = segments_clear(scene, a, b)
    assert not clear[0]         # straight through the box
    assert clear[1]             # diagonal above it


def test_segments_with_surface_endpoints_are_clear(empty16):
    scene = empty16.scene
    # endpoints exactly on two different walls; pull-in keeps them clear
    a = np.array([[4.0, 2.0, 1.5]])
    b = np.array([[0.0, 1.0, 1.0]])
    assert segments_clear(scene, a, b)[0]


def test_visible_symmetric_and_rejects_identical_points(box24):
    scene = box24.scene
    a = np.array([0.5, 2.0, 0.45])
    b = np.array([3.9, 2.0, 0.45])
    assert visible(scene, a, b) == visible(scene, b, a)
    c = np.array([0.5, 0.2, 2.8])
    d = np.array([3.9, 3.8, 2.8])
    assert visible(scene, c, d) == visible(scene, d, c)
    with pytest.raises(InvalidSegmentError):
        visible(scene, a, a)


def test_scene_contains_solids(box24):
    scene = box24.scene
    inside = np.array([[2.45, 2.0, 0.45]])
    outside = np.array([[0.5, 0.5, 2.5]])
    assert scene.contains(inside)[0]
    assert not scene.contains(outside)[0]


# ---------------------------------------------------------------------------
# ellipsoid inversion

def random_configs(rng, n):
    x_c = rng.normal(size=(n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t_true = 0.1 + 4.9 * rng.random(n)
    x_i = x_c + rng.normal(scale=2.0, size=(n, 3))
    p = x_c + t_true[:, None] * dirs
    L = np.linalg.norm(p - x_i, axis=1) + t_true
    return x_c, dirs, x_i, t_true, L


def test_ellipsoid_depth_round_trip(rng):
    x_c, dirs, x_i, t_true, L = random_configs(rng, 200)
    for k in range(200):
        t = ellipsoid_depth(L[k], x_i[k], x_c[k], dirs[k])
        assert abs(t - t_true[k]) <= 1e-7


def test_ellipsoid_depth_matches_grid_search(rng):
    x_c, dirs, x_i, t_true, L = random_configs(rng, 100)
    grid = np.arange(0.0, 5.2, 1e-4)
    for k in range(100):
        t = ellipsoid_depth(L[k], x_i[k], x_c[k], dirs[k])
        p = x_c[k][None] + grid[:, None] * dirs[k][None]
        resid = np.abs(np.linalg.norm(p - x_i[k][None], axis=1) + grid - L[k])
        t_bf = grid[np.argmin(resid)]
        assert abs(t - t_bf) <= 5e-4


def test_ellipsoid_depth_degenerate_denominator():
    x_c = np.zeros(3)
    x_i = np.array([2.0, 0.0, 0.0])
    d = np.array([1.0, 0.0, 0.0])      # looking straight at the focus
    with pytest.raises(DegenerateGeometryError):
        ellipsoid_depth(2.0, x_i, x_c, d)


def test_ellipsoid_depth_no_solution():
    x_c = np.zeros(3)
    x_i = np.array([2.0, 0.0, 0.0])
    d = np.array([-1.0, 0.0, 0.0])
    with pytest.raises(NoSolutionError):
        ellipsoid_depth(1.0, x_i, x_c, d)   # path shorter than |x_i - x_c|


def test_ellipsoid_depth_many_matches_scalar(rng):
    x_c0 = np.array([0.3, -0.2, 0.1])
    x_c, dirs, x_i, t_true, L = random_configs(rng, 64)
    t, valid = ellipsoid_depth_many(L, x_i, x_c0, dirs)
    for k in range(64):
        Lk = np.linalg.norm(x_c0 + t_true[k] * dirs[k] - x_i[k]) + t_true[k]
        ref = ellipsoid_depth(Lk, x_i[k], x_c0, dirs[k])
        tk, vk = ellipsoid_depth_many(np.array([Lk]), x_i[k], x_c0,
                                      dirs[k][None])
        assert vk[0]
        assert np.isclose(tk[0], ref, rtol=0, atol=1e-12)


def test_ellipsoid_depth_many_flags_invalid():
    x_c = np.zeros(3)
    x_i = np.array([2.0, 0.0, 0.0])
    dirs = np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    paths = np.array([1.0, 2.5])
    t, valid = ellipsoid_depth_many(paths, x_i, x_c, dirs)
    assert not valid[0] and np.isnan(t[0])
    assert valid[1] and np.isfinite(t[1])
