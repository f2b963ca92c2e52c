"""Shadow-volume carving, voxelization, and novel-view rendering."""
import numpy as np
import pytest

from bouncelidar import (
    EMPTY,
    OCCUPIED,
    UNKNOWN,
    CameraPose,
    CarveInputError,
    DepthMap,
    GeometryError,
    GridConfig,
    LidarRig,
    OccupancyGrid,
    ShadowMaskSet,
    carve_occupancy,
    empty_room_scene,
    empty_soundness_violations,
    look_at_rotation,
    mark_segments,
    render_gbuffer,
    render_novel_depth,
    spot_grid_dirs,
    trace_spots,
    voxel_iou,
    voxelize_scene,
)


def room_grid(scene, resolution=32):
    return GridConfig((resolution,) * 3, scene.room.lo, scene.room.hi)


def all_lit(rig):
    cam = rig.camera
    return ShadowMaskSet(np.ones((rig.n_spots, cam.n_y, cam.n_x), dtype=bool))


def test_cell_codes():
    assert (UNKNOWN, EMPTY, OCCUPIED) == (0, 1, 2)


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig((0, 4, 4), np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        GridConfig((4, 4), np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        GridConfig((4, 4, 4), np.zeros(3), np.array([1.0, 1.0, 0.0]))
    cfg = GridConfig((8, 4, 2), np.zeros(3), np.array([4.0, 4.0, 3.0]))
    assert np.allclose(cfg.cell_size, [0.5, 1.0, 1.5])


def test_grid_cell_lookup():
    grid = OccupancyGrid(np.zeros((4, 4, 4), dtype=np.uint8),
                         np.zeros(3), np.ones(3) * 4.0)
    assert np.array_equal(grid.cell_of([0.1, 1.2, 3.9]), [[0, 1, 3]])
    assert np.array_equal(grid.cell_of([-5.0, 2.0, 9.0]), [[0, 2, 3]])
    assert grid.config().resolution == (4, 4, 4)


def test_mark_segments_matches_dense_sampling(rng):
    shape = (16, 16, 16)
    lo = np.zeros(3)
    cell = 1.0 / 16.0
    p0 = rng.random((20, 3))
    p1 = rng.random((20, 3))
    visited = mark_segments(shape, lo, cell, p0, p1)
    # dense enough that even corner-grazing slivers catch a sample
    ref = np.zeros(shape, dtype=bool)
    ts = np.linspace(0.0, 1.0, 200_001)
    for a, b in zip(p0, p1):
        pts = a + ts[:, None] * (b - a)
        idx = np.clip((pts / cell).astype(np.int64), 0, 15)
        ref[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    assert np.array_equal(visited, ref)


def test_mark_segments_degenerate_and_single():
    shape = (8, 8, 8)
    none = mark_segments(shape, np.zeros(3), 0.125,
                         [[0.5, 0.5, 0.5]], [[0.5, 0.5, 0.5]])
    assert not none.any()
    one = mark_segments(shape, np.zeros(3), 0.125,
                        [[0.0625, 0.0625, 0.0625]], [[0.9, 0.0625, 0.0625]])
    assert np.array_equal(np.argwhere(one)[:, 1:], np.zeros((8, 2), int))
    assert one[:, 0, 0].all()


def carve_bundle(bundle, resolution=32, masks=None):
    gcfg = room_grid(bundle.scene, resolution)
    grid = carve_occupancy(bundle.depth, masks or bundle.gt, bundle.rig,
                           bundle.spots, gcfg)
    return grid, gcfg


def test_carve_all_lit_structure(empty16):
    b = empty16
    grid, gcfg = carve_bundle(b, masks=all_lit(b.rig))
    assert set(np.unique(grid.cells)) <= {UNKNOWN, EMPTY, OCCUPIED}
    # Occupied is only the observed shell plus the sealed boundary layer
    pix = np.isfinite(b.gb.depth)
    shell = np.zeros(grid.cells.shape, dtype=bool)
    idx = grid.cell_of(b.gb.points[pix])
    shell[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    boundary = np.ones(grid.cells.shape, dtype=bool)
    boundary[1:-1, 1:-1, 1:-1] = False
    occ = grid.cells == OCCUPIED
    assert np.all(~occ | shell | boundary)
    # mid-segment free space is carved Empty
    mid = 0.5 * (b.rig.camera.position + b.gb.points[pix].reshape(-1, 3))
    cells = grid.cell_of(mid)
    assert np.all(grid.cells[cells[:, 0], cells[:, 1], cells[:, 2]] == EMPTY)


def test_carve_input_errors(empty16):
    b = empty16
    gcfg = room_grid(b.scene)
    with pytest.raises(CarveInputError):
        carve_occupancy(b.depth, ShadowMaskSet(np.ones((0, 16, 16), bool)),
                        b.rig, b.spots, gcfg)
    with pytest.raises(CarveInputError):
        carve_occupancy(b.depth,
                        ShadowMaskSet(np.ones((b.rig.n_spots + 1, 16, 16),
                                              bool)),
                        b.rig, b.spots, gcfg)
    with pytest.raises(CarveInputError):
        carve_occupancy(b.depth,
                        ShadowMaskSet(np.ones((b.rig.n_spots, 8, 8), bool)),
                        b.rig, b.spots, gcfg)
    nan_depth = DepthMap(np.full((16, 16), np.nan), None)
    with pytest.raises(CarveInputError):
        carve_occupancy(nan_depth, b.gt, b.rig, b.spots, gcfg)


def test_hidden_cube_recovery(hidden32):
    b = hidden32
    grid, gcfg = carve_bundle(b)
    gt_occ = voxelize_scene(b.scene, gcfg)
    assert voxel_iou(grid, gt_occ) >= 0.5
    assert empty_soundness_violations(grid, b.scene) == 0
    # the occluded object itself leaves occupied cells inside its bounds
    box = b.spec["objects"][1]
    b_lo, b_hi = np.asarray(box["lo"]), np.asarray(box["hi"])
    cs = gcfg.cell_size
    centers = np.stack(np.meshgrid(*[gcfg.lo[a] + (np.arange(32) + 0.5) * cs[a]
                                     for a in range(3)],
                                   indexing="ij"), axis=-1)
    inside = np.all((centers > b_lo) & (centers < b_hi), axis=-1)
    assert np.sum((grid.cells == OCCUPIED) & inside) > 0


def test_carving_more_light_never_adds_occupancy(hidden32):
    b = hidden32
    grid, gcfg = carve_bundle(b)
    brighter = b.gt.masks.copy()
    shadowed = np.flatnonzero(~brighter.reshape(b.rig.n_spots, -1).all(axis=1))
    brighter[shadowed[0]] = True
    grid2 = carve_occupancy(b.depth, ShadowMaskSet(brighter), b.rig,
                            b.spots, gcfg)
    occ, occ2 = grid.cells == OCCUPIED, grid2.cells == OCCUPIED
    assert np.all(~occ2 | occ)
    assert occ2.sum() <= occ.sum()


def novel_view_setup():
    scene, rig0, spec = empty_room_scene(24, 24, spot_grid=(2, 2))
    cam = CameraPose(position=np.array([1.0, 2.0, 1.5]),
                     rotation=look_at_rotation(np.array([1.0, 0.0, 0.0])),
                     fov_deg=40.0, n_x=24, n_y=24)
    rig = LidarRig(cam, np.array([1.0, 2.06, 1.47]),
                   spot_grid_dirs(cam, 2, 2, span=0.5))
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    gcfg = GridConfig((32, 32, 32), scene.room.lo, scene.room.hi)
    grid = carve_occupancy(DepthMap(gb.depth, None), all_lit(rig), rig,
                           spots, gcfg)
    return grid, gcfg, cam, gb


def test_novel_depth_round_trip():
    grid, gcfg, cam, gb = novel_view_setup()
    nd = render_novel_depth(grid, cam, unknown="empty")
    both = nd.valid & np.isfinite(gb.depth)
    assert both.all()
    diag = float(np.linalg.norm(gcfg.cell_size))
    err = np.abs(nd.values[both] - gb.depth[both])
    assert float(err.max()) <= diag


def test_novel_depth_unknown_policies_and_errors():
    grid, gcfg, cam, _ = novel_view_setup()
    eager = render_novel_depth(grid, cam, unknown="occupied")
    lazy = render_novel_depth(grid, cam, unknown="empty")
    assert np.all(eager.values[eager.valid & lazy.valid]
                  <= lazy.values[eager.valid & lazy.valid] + 1e-12)
    with pytest.raises(ValueError):
        render_novel_depth(grid, cam, unknown="transparent")
    outside = CameraPose(position=gcfg.hi + 1.0,
                         rotation=look_at_rotation(np.array([-1.0, 0.0, 0.0])),
                         fov_deg=40.0, n_x=4, n_y=4)
    with pytest.raises(GeometryError):
        render_novel_depth(grid, outside)


def test_novel_depth_unblocked_rays_invalid():
    cells = np.full((8, 8, 8), EMPTY, dtype=np.uint8)
    grid = OccupancyGrid(cells, np.zeros(3), np.ones(3) * 4.0)
    cam = CameraPose(position=np.array([2.0, 2.0, 2.0]),
                     rotation=look_at_rotation(np.array([1.0, 0.0, 0.0])),
                     fov_deg=60.0, n_x=5, n_y=5)
    nd = render_novel_depth(grid, cam, unknown="empty")
    assert not nd.valid.any()
    # a single occupied slab catches every forward ray at its entry face
    cells[6, :, :] = OCCUPIED
    nd2 = render_novel_depth(grid, cam, unknown="empty")
    assert nd2.valid.all()
    center = nd2.values[2, 2]                     # axis ray, slab at x = 3.0
    assert np.isclose(center, 1.0, atol=1e-9)
    assert np.all(nd2.values >= center - 1e-12)


def test_voxelize_box_exact():
    spec_box = {"kind": "box", "lo": [1.1, 0.9, 0.7], "hi": [2.3, 2.0, 1.6],
                "material": {"kind": "diffuse", "albedo": 0.5}}
    from helpers import room_with_objects
    scene, rig, spec = room_with_objects([spec_box], n=8)
    gcfg = room_grid(scene, 20)
    occ = voxelize_scene(scene, gcfg, include_walls=False)
    cs = gcfg.cell_size
    centers = np.stack(np.meshgrid(*[gcfg.lo[a] + (np.arange(20) + 0.5) * cs[a]
                                     for a in range(3)],
                                   indexing="ij"), axis=-1)
    b_lo = np.asarray(spec_box["lo"]) - 0.5 * cs
    b_hi = np.asarray(spec_box["hi"]) + 0.5 * cs
    expected = np.all((centers >= b_lo) & (centers <= b_hi), axis=-1)
    assert np.array_equal(occ, expected)


def test_voxelize_sphere_conservative_and_walls():
    spec_sphere = {"kind": "sphere", "center": [2.0, 2.0, 1.4], "radius": 0.5,
                   "material": {"kind": "diffuse", "albedo": 0.5}}
    from helpers import room_with_objects
    scene, rig, spec = room_with_objects([spec_sphere], n=8)
    gcfg = room_grid(scene, 24)
    occ = voxelize_scene(scene, gcfg, include_walls=False)
    cs = gcfg.cell_size
    centers = np.stack(np.meshgrid(*[gcfg.lo[a] + (np.arange(24) + 0.5) * cs[a]
                                     for a in range(3)],
                                   indexing="ij"), axis=-1)
    dist = np.linalg.norm(centers - np.array([2.0, 2.0, 1.4]), axis=-1)
    assert occ[dist <= 0.5].all()                     # no false negatives
    half_diag = float(np.linalg.norm(cs)) / 2.0
    assert not occ[dist > 0.5 + half_diag].any()      # bounded slack
    walled = voxelize_scene(scene, gcfg, include_walls=True)
    boundary = np.ones(occ.shape, dtype=bool)
    boundary[1:-1, 1:-1, 1:-1] = False
    assert walled[boundary].all()
    assert np.array_equal(walled[~boundary], occ[~boundary])


def test_voxel_iou_counting():
    gt = np.zeros((4, 4, 4), dtype=bool)
    gt[1:3, 1:3, 1:3] = True
    cells = np.where(gt, OCCUPIED, EMPTY).astype(np.uint8)
    grid = OccupancyGrid(cells, np.zeros(3), np.ones(3))
    assert voxel_iou(grid, gt) == 1.0
    unknown = OccupancyGrid(np.zeros((4, 4, 4), dtype=np.uint8),
                            np.zeros(3), np.ones(3))
    assert voxel_iou(unknown, gt) == 0.0
    assert voxel_iou(unknown, gt, unknown="occupied") == gt.sum() / gt.size
    empty_gt = np.zeros((4, 4, 4), dtype=bool)
    assert voxel_iou(unknown, empty_gt) == 1.0
    with pytest.raises(CarveInputError):
        voxel_iou(grid, np.zeros((5, 5, 5), dtype=bool))


def test_empty_soundness_violation_counter(hidden32):
    b = hidden32
    gcfg = room_grid(b.scene, 32)
    cells = np.full(gcfg.resolution, EMPTY, dtype=np.uint8)
    bad = OccupancyGrid(cells, gcfg.lo.copy(), gcfg.hi.copy())
    n_bad = empty_soundness_violations(bad, b.scene)
    assert n_bad > 0
    good = OccupancyGrid(np.full(gcfg.resolution, UNKNOWN, dtype=np.uint8),
                         gcfg.lo.copy(), gcfg.hi.copy())
    assert empty_soundness_violations(good, b.scene) == 0
