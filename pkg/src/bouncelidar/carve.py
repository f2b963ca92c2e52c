"""Occupancy carving from depth and per-spot shadow masks.

The grid holds three states. Unknown is the initial state, Empty is proven
free space, Occupied is either observed surface or shadow evidence that
survived every carve. The passes, in order:

  1. cells containing unprojected visible-surface points become Occupied
     (the shell); a one-voxel dilation of the shell is protected from
     carving to absorb depth quantization, but only the shell itself is
     marked Occupied
  2. camera frustum: each pixel ray carves Empty up to one voxel short of
     its depth
  3. every lit (spot, pixel) pair carves its source-to-surface segment
     Empty, trimmed one voxel at both ends, skipping protected cells
  4. every shadowed pair marks the still-Unknown cells it traverses; those
     candidates become Occupied
  5. the outermost cell layer is sealed Occupied: the grid spans the room
     box, so its boundary is wall by construction, not something a single
     camera view has to discover

Soundness: lit segments are true free-space paths and trims absorb
endpoint quantization, so no cell strictly interior to a real solid is
ever marked Empty. Adding more spots only adds carving and candidate
evidence; it never turns Empty back into Occupied because candidates test
against the final Empty set.

Segments are traversed with a lockstep Amanatides-Woo DDA over the whole
batch, so carving cost scales with grid resolution rather than segment
count in Python terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .demux import DepthMap
from .geometry import GeometryError, Panel

UNKNOWN = 0
EMPTY = 1
OCCUPIED = 2


class CarveInputError(ValueError):
    """Carving inputs are unusable (no spots, empty masks, bad shapes)."""


@dataclass
class GridConfig:
    resolution: tuple           # (gx, gy, gz)
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.resolution = tuple(int(r) for r in self.resolution)
        if len(self.resolution) != 3 or min(self.resolution) < 1:
            raise ValueError("grid resolution must be three positive ints")
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if not np.all(self.hi > self.lo):
            raise ValueError("grid needs hi > lo on every axis")

    @property
    def cell_size(self):
        return (self.hi - self.lo) / np.array(self.resolution, dtype=np.float64)


@dataclass
class OccupancyGrid:
    cells: np.ndarray           # (gx, gy, gz) uint8 of UNKNOWN / EMPTY / OCCUPIED
    lo: np.ndarray
    hi: np.ndarray

    @property
    def resolution(self):
        return self.cells.shape

    @property
    def cell_size(self):
        return (self.hi - self.lo) / np.array(self.cells.shape, dtype=np.float64)

    def config(self):
        return GridConfig(self.cells.shape, self.lo, self.hi)

    def cell_of(self, points):
        points = np.atleast_2d(points)
        idx = np.floor((points - self.lo) / self.cell_size).astype(np.int64)
        return np.clip(idx, 0, np.array(self.cells.shape) - 1)


def _empty_grid(cfg):
    return OccupancyGrid(np.zeros(cfg.resolution, dtype=np.uint8),
                         cfg.lo.copy(), cfg.hi.copy())


def mark_segments(grid_shape, lo, cell_size, p0, p1):
    """Boolean grid of cells visited by any of the segments (lockstep DDA)."""
    visited = np.zeros(grid_shape, dtype=bool)
    p0 = np.atleast_2d(np.asarray(p0, dtype=np.float64))
    p1 = np.atleast_2d(np.asarray(p1, dtype=np.float64))
    d = p1 - p0
    length = np.linalg.norm(d, axis=1)
    live = length > 0.0
    if not live.any():
        return visited
    p0, p1, d = p0[live], p1[live], d[live]
    res = np.array(grid_shape, dtype=np.int64)
    cell = np.clip(np.floor((p0 - lo) / cell_size).astype(np.int64), 0, res - 1)
    end = np.clip(np.floor((p1 - lo) / cell_size).astype(np.int64), 0, res - 1)
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.abs(cell_size / d)
        nxt = lo + (cell + (step > 0)) * cell_size
        t_max = (nxt - p0) / d
    t_max[step == 0] = np.inf
    t_delta[step == 0] = np.inf

    active = np.ones(cell.shape[0], dtype=bool)
    max_steps = int(np.sum(res)) + 3
    for _ in range(max_steps):
        idx = cell[active]
        visited[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        done = np.all(cell == end, axis=1) | (t_max.min(axis=1) > 1.0)
        active &= ~done
        if not active.any():
            break
        axis = t_max[active].argmin(axis=1)
        rows = np.flatnonzero(active)
        cell[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        oob = (cell[rows] < 0).any(axis=1) | (cell[rows] >= res).any(axis=1)
        if oob.any():
            active[rows[oob]] = False
    return visited


def _trim_segments(p0, p1, trim0, trim1):
    """Shorten segments at both ends; fully consumed segments collapse."""
    d = p1 - p0
    length = np.linalg.norm(d, axis=1)
    keep = length > trim0 + trim1
    d_hat = np.zeros_like(d)
    d_hat[keep] = d[keep] / length[keep, None]
    a = p0 + trim0 * d_hat
    b = p1 - trim1 * d_hat
    a[~keep] = p0[~keep]
    b[~keep] = p0[~keep]
    return a, b


def carve_occupancy(depth, shadows, rig, spots, grid_cfg, seal_bounds=True):
    """Carve an occupancy grid from depth, shadow masks, and spot geometry.

    seal_bounds marks the outermost cell layer Occupied, treating the grid
    bounds as the known room envelope rather than unknown space.
    """
    if isinstance(depth, DepthMap):
        d, valid = depth.values, depth.valid
    else:
        d = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(d)
    masks = shadows.masks
    if masks.ndim != 3 or masks.shape[0] < 1:
        raise CarveInputError("need at least one shadow mask")
    if masks.shape[0] != spots.n_spots:
        raise CarveInputError("shadow mask count does not match spot count")
    if masks.shape[1:] != d.shape:
        raise CarveInputError("shadow masks and depth map disagree on size")
    if not valid.any():
        raise CarveInputError("depth map has no valid pixels")

    grid = _empty_grid(grid_cfg)
    cells = grid.cells
    cell_size = grid.cell_size
    voxel = float(cell_size.min())
    cam = rig.camera

    pts = cam.unproject(np.where(valid, d, 1.0)).reshape(-1, 3)
    dirs = cam.pixel_dirs().reshape(-1, 3)
    flat_valid = valid.ravel()
    surf = pts[flat_valid]

    # 1. visible shell, with a protective one-voxel dilation
    shell = np.zeros(grid.resolution, dtype=bool)
    idx = grid.cell_of(surf)
    shell[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    protected = ndimage.binary_dilation(shell, structure=np.ones((3, 3, 3)))

    # 2. frustum carve up to one voxel short of each depth
    depth_flat = np.where(flat_valid, d.ravel(), 0.0)
    ends = cam.position + np.maximum(depth_flat - voxel, 0.0)[:, None] * dirs
    starts = np.broadcast_to(cam.position, ends.shape)
    empty = mark_segments(grid.resolution, grid_cfg.lo, cell_size,
                          starts[flat_valid], ends[flat_valid])

    # 3. lit segments carve free space
    eff = spots.effective_point
    for i in range(spots.n_spots):
        lit = masks[i].ravel() & flat_valid
        if not lit.any():
            continue
        src = np.broadcast_to(eff[i], (int(lit.sum()), 3))
        a, b = _trim_segments(src, pts[lit], voxel, voxel)
        empty |= mark_segments(grid.resolution, grid_cfg.lo, cell_size, a, b)
    empty &= ~protected
    cells[empty] = EMPTY

    # 4. shadowed segments vote for occupancy where nothing carved
    candidate = np.zeros(grid.resolution, dtype=bool)
    for i in range(spots.n_spots):
        shadowed = ~masks[i].ravel() & flat_valid
        if not shadowed.any():
            continue
        src = np.broadcast_to(eff[i], (int(shadowed.sum()), 3))
        a, b = _trim_segments(src, pts[shadowed], voxel, voxel)
        candidate |= mark_segments(grid.resolution, grid_cfg.lo, cell_size, a, b)
    cells[candidate & (cells == UNKNOWN)] = OCCUPIED
    cells[shell] = OCCUPIED
    if seal_bounds:
        cells[0, :, :] = cells[-1, :, :] = OCCUPIED
        cells[:, 0, :] = cells[:, -1, :] = OCCUPIED
        cells[:, :, 0] = cells[:, :, -1] = OCCUPIED
    return grid


def render_novel_depth(grid, pose, unknown="occupied"):
    """Ray-march the grid from a camera pose to the first blocking cell.

    Returns distance to the entry face of the first Occupied (and, under the
    default policy, Unknown) cell. The pose must sit inside the grid bounds.
    Rays that leave the grid unblocked are invalid.
    """
    if unknown not in ("occupied", "empty"):
        raise ValueError(f"unknown policy {unknown!r}")
    if np.any(pose.position <= grid.lo) or np.any(pose.position >= grid.hi):
        raise GeometryError("camera pose is outside the grid bounds")
    blocking = (grid.cells == OCCUPIED)
    if unknown == "occupied":
        blocking |= grid.cells == UNKNOWN
    dirs = pose.pixel_dirs().reshape(-1, 3)
    n = dirs.shape[0]
    res = np.array(grid.resolution, dtype=np.int64)
    cell_size = grid.cell_size
    cell = np.repeat(grid.cell_of(pose.position[None]), n, axis=0)
    step = np.sign(dirs).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.abs(cell_size / dirs)
        nxt = grid.lo + (cell + (step > 0)) * cell_size
        t_max = (nxt - pose.position) / dirs
    t_max[step == 0] = np.inf
    t_delta[step == 0] = np.inf

    dist = np.full(n, np.nan)
    entry = np.zeros(n)
    active = np.ones(n, dtype=bool)
    for _ in range(int(res.sum()) + 3):
        idx = cell[active]
        hit = blocking[idx[:, 0], idx[:, 1], idx[:, 2]]
        rows = np.flatnonzero(active)
        dist[rows[hit]] = entry[rows[hit]]
        active[rows[hit]] = False
        if not active.any():
            break
        axis = t_max[active].argmin(axis=1)
        rows = np.flatnonzero(active)
        entry[rows] = t_max[rows, axis]
        cell[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        oob = (cell[rows] < 0).any(axis=1) | (cell[rows] >= res).any(axis=1)
        if oob.any():
            active[rows[oob]] = False
    values = dist.reshape(pose.n_y, pose.n_x)
    return DepthMap(values, np.isfinite(values))


def voxelize_scene(scene, grid_cfg, include_walls=True):
    """Ground-truth occupancy: cells overlapping a solid, plus wall layers.

    Solid overlap is tested on the cell center against the solid dilated by
    half a cell (exact for boxes, conservative within half a diagonal for
    curved primitives). Walls contribute the outermost cell layer of each
    room face they close.
    """
    cfg = grid_cfg
    gx, gy, gz = cfg.resolution
    cs = cfg.cell_size
    centers = np.stack(np.meshgrid(
        cfg.lo[0] + (np.arange(gx) + 0.5) * cs[0],
        cfg.lo[1] + (np.arange(gy) + 0.5) * cs[1],
        cfg.lo[2] + (np.arange(gz) + 0.5) * cs[2],
        indexing="ij"), axis=-1).reshape(-1, 3)
    occ = np.zeros(centers.shape[0], dtype=bool)
    half_diag = float(np.linalg.norm(cs) / 2.0)
    for obj in scene.objects:
        if isinstance(obj, Panel):
            continue
        b_lo, b_hi = obj.bounds()
        if hasattr(obj, "lo"):  # boxes: exact overlap via AABB inflation
            occ |= np.all((centers >= b_lo - cs / 2.0) &
                          (centers <= b_hi + cs / 2.0), axis=1)
        else:
            occ |= obj.contains(centers)
            near = np.all((centers >= b_lo - half_diag) &
                          (centers <= b_hi + half_diag), axis=1)
            sub = np.flatnonzero(near & ~occ)
            if sub.size:
                occ[sub] |= _near_surface(obj, centers[sub], half_diag)
    occ = occ.reshape(gx, gy, gz)
    if include_walls:
        occ[0, :, :] = occ[-1, :, :] = True
        occ[:, 0, :] = occ[:, -1, :] = True
        occ[:, :, 0] = occ[:, :, -1] = True
    return occ


def _near_surface(obj, points, radius):
    """Conservative within-radius test for curved solids."""
    if hasattr(obj, "center"):  # sphere
        return np.abs(np.linalg.norm(points - obj.center, axis=1)
                      - obj.radius) <= radius
    w = points - obj.base  # cylinder
    s = w @ obj.axis
    perp = np.linalg.norm(w - s[:, None] * obj.axis, axis=1)
    side = (np.abs(perp - obj.radius) <= radius) & (s >= -radius) & \
        (s <= obj.height + radius)
    caps = (perp <= obj.radius + radius) & \
        ((np.abs(s) <= radius) | (np.abs(s - obj.height) <= radius))
    return side | caps


def voxel_iou(grid, gt_occupied, unknown="empty"):
    """IoU between carved occupancy and a ground-truth boolean grid.

    The default scores Occupied cells only. unknown="occupied" folds
    Unknown into the prediction, matching the conservative blocking set
    that render_novel_depth marches through.
    """
    if grid.cells.shape != gt_occupied.shape:
        raise CarveInputError("grid and ground truth disagree on resolution")
    pred = grid.cells == OCCUPIED
    if unknown == "occupied":
        pred |= grid.cells == UNKNOWN
    union = np.logical_or(pred, gt_occupied).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt_occupied).sum() / union)


def empty_soundness_violations(grid, scene, erode=1):
    """Count Empty cells strictly interior to a ground-truth solid.

    Interior means the cell center lies inside a solid and the cell
    survives erosion by the 26-neighborhood, so surface-straddling cells
    are excluded from the check.
    """
    cfg = grid.config()
    gx, gy, gz = cfg.resolution
    cs = cfg.cell_size
    centers = np.stack(np.meshgrid(
        cfg.lo[0] + (np.arange(gx) + 0.5) * cs[0],
        cfg.lo[1] + (np.arange(gy) + 0.5) * cs[1],
        cfg.lo[2] + (np.arange(gz) + 0.5) * cs[2],
        indexing="ij"), axis=-1).reshape(-1, 3)
    inside = scene.contains(centers).reshape(gx, gy, gz)
    interior = ndimage.binary_erosion(inside, structure=np.ones((3, 3, 3)),
                                      iterations=erode)
    return int(np.sum((grid.cells == EMPTY) & interior))
