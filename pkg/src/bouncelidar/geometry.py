"""Scene geometry: primitives, ray casting, visibility, ellipsoid depth inversion.

World coordinates are right-handed meters. Points and directions are numpy
float64 arrays of shape (3,), or (N, 3) in the batch helpers that the
renderer relies on. Directions are unit length.

A scene is a closed axis-aligned room (six diffuse walls with per-wall
albedo) plus a list of object primitives strictly inside it. Mirror panels
are rectangles lying flush on a wall. Coincident-surface ties during ray
casting are broken by primitive list index; scene objects are enumerated
before the walls, so a flush panel wins against the wall behind it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299_792_458.0  # speed of light, m/s

SEGMENT_EPS = 1e-6   # endpoint offset for visibility casts, meters
TIE_EPS = 1e-9       # hits closer than this count as coincident
WALL_FLUSH_TOL = 1e-6
_DENOM_EPS = 1e-9
_PARALLEL_EPS = 1e-15

WALL_KEYS = ("x-", "x+", "y-", "y+", "z-", "z+")


class GeometryError(ValueError):
    """Invalid geometric query or construction."""


class DegenerateGeometryError(GeometryError):
    """Ellipsoid inversion does not determine a unique point."""


class NoSolutionError(GeometryError):
    """Ellipsoid inversion has no solution on the forward ray."""


class InvalidSegmentError(GeometryError):
    """Visibility query between two identical points."""


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise GeometryError("cannot normalize zero-length vector")
    return v / n


def _as_point(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise GeometryError(f"expected shape (3,), got {p.shape}")
    return p


@dataclass(frozen=True)
class Diffuse:
    """Lambertian surface with albedo in (0, 1]."""

    albedo: float

    def __post_init__(self):
        if not 0.0 < self.albedo <= 1.0:
            raise GeometryError(f"albedo must be in (0, 1], got {self.albedo}")


@dataclass(frozen=True)
class Mirror:
    """Ideal planar mirror (lossless specular reflection)."""


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_point(self.origin))
        object.__setattr__(self, "direction", _as_point(self.direction))
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise GeometryError("ray direction must be unit length")
        if self.t_min < 0.0 or self.t_max < self.t_min:
            raise GeometryError("require 0 <= t_min <= t_max")


@dataclass(frozen=True)
class Hit:
    point: np.ndarray
    normal: np.ndarray       # unit, oriented against the ray direction
    distance: float
    material: object
    prim_index: int


class Box:
    """Axis-aligned solid box."""

    def __init__(self, lo, hi, material):
        self.lo = _as_point(lo)
        self.hi = _as_point(hi)
        if not np.all(self.hi > self.lo):
            raise GeometryError("box needs hi > lo on every axis")
        self.material = material

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def contains(self, p):
        p = np.atleast_2d(p)
        return np.all((p >= self.lo) & (p <= self.hi), axis=1)

    def intersect(self, o, d):
        n = o.shape[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (self.lo - o) / d
            t_hi = (self.hi - o) / d
        near = np.minimum(t_lo, t_hi)
        far = np.maximum(t_lo, t_hi)
        par = np.abs(d) < _PARALLEL_EPS
        if par.any():
            inside = (o >= self.lo) & (o <= self.hi)
            near = np.where(par, np.where(inside, -np.inf, np.inf), near)
            far = np.where(par, np.where(inside, np.inf, -np.inf), far)
        t_enter = near.max(axis=1)
        t_exit = far.min(axis=1)
        ok = (t_enter <= t_exit) & (t_exit > 0.0)
        entering = t_enter > 0.0
        t = np.where(entering, t_enter, t_exit)
        t = np.where(ok, t, np.inf)
        axis = np.where(entering, near.argmax(axis=1), far.argmin(axis=1))
        sign = np.where(entering, -np.sign(d[np.arange(n), axis]),
                        np.sign(d[np.arange(n), axis]))
        normal = np.zeros((n, 3))
        normal[np.arange(n), axis] = np.where(sign == 0.0, 1.0, sign)
        return t, normal


class Sphere:
    def __init__(self, center, radius, material):
        self.center = _as_point(center)
        if radius <= 0:
            raise GeometryError("sphere radius must be positive")
        self.radius = float(radius)
        self.material = material

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def contains(self, p):
        p = np.atleast_2d(p)
        return np.linalg.norm(p - self.center, axis=1) <= self.radius

    def intersect(self, o, d):
        oc = o - self.center
        b = np.einsum("ij,ij->i", oc, d)
        q = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - q
        ok = disc >= 0.0
        root = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - root
        t1 = -b + root
        t = np.where(t0 > 0.0, t0, t1)
        t = np.where(ok & (t > 0.0), t, np.inf)
        t_safe = np.where(np.isfinite(t), t, 0.0)
        p = o + t_safe[:, None] * d
        normal = (p - self.center) / self.radius
        normal[~np.isfinite(t)] = 0.0
        return t, normal


class Cylinder:
    """Finite closed cylinder given by base center, unit axis, height, radius."""

    def __init__(self, base, axis, height, radius, material):
        self.base = _as_point(base)
        self.axis = unit(axis)
        if height <= 0 or radius <= 0:
            raise GeometryError("cylinder height and radius must be positive")
        self.height = float(height)
        self.radius = float(radius)
        self.material = material

    def bounds(self):
        top = self.base + self.height * self.axis
        ext = self.radius * np.sqrt(np.maximum(1.0 - self.axis ** 2, 0.0))
        return np.minimum(self.base, top) - ext, np.maximum(self.base, top) + ext

    def contains(self, p):
        p = np.atleast_2d(p)
        w = p - self.base
        s = w @ self.axis
        perp = w - s[:, None] * self.axis
        return (s >= 0.0) & (s <= self.height) & \
            (np.einsum("ij,ij->i", perp, perp) <= self.radius ** 2)

    def intersect(self, o, d):
        n = o.shape[0]
        w = o - self.base
        d_par = d @ self.axis
        w_par = w @ self.axis
        d_perp = d - d_par[:, None] * self.axis
        w_perp = w - w_par[:, None] * self.axis

        cand_t = np.full((4, n), np.inf)
        a = np.einsum("ij,ij->i", d_perp, d_perp)
        b = np.einsum("ij,ij->i", w_perp, d_perp)
        c = np.einsum("ij,ij->i", w_perp, w_perp) - self.radius ** 2
        disc = b * b - a * c
        quad = (a > 1e-18) & (disc >= 0.0)
        root = np.sqrt(np.where(quad, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            for k, sgn in enumerate((-1.0, 1.0)):
                t = (-b + sgn * root) / a
                s = w_par + t * d_par
                good = quad & (t > 0.0) & (s >= 0.0) & (s <= self.height)
                cand_t[k] = np.where(good, t, np.inf)
            for k, s_cap in enumerate((0.0, self.height)):
                t = (s_cap - w_par) / d_par
                p_perp = w_perp + t[:, None] * d_perp
                r2 = np.einsum("ij,ij->i", p_perp, p_perp)
                good = (np.abs(d_par) > _PARALLEL_EPS) & (t > 0.0) & \
                    (r2 <= self.radius ** 2)
                cand_t[2 + k] = np.where(good, t, np.inf)

        which = cand_t.argmin(axis=0)
        t = cand_t[which, np.arange(n)]
        normal = np.zeros((n, 3))
        hit = np.isfinite(t)
        if hit.any():
            side = hit & (which < 2)
            if side.any():
                s = w_par[side] + t[side] * d_par[side]
                p = o[side] + t[side, None] * d[side]
                normal[side] = (p - self.base - s[:, None] * self.axis) / self.radius
            for k, sgn in ((2, -1.0), (3, 1.0)):
                cap = hit & (which == k)
                normal[cap] = sgn * self.axis
        return t, normal


class Panel:
    """Rectangle given by a corner and two orthogonal edge vectors."""

    def __init__(self, origin, edge_u, edge_v, material):
        self.origin = _as_point(origin)
        self.edge_u = np.asarray(edge_u, dtype=np.float64)
        self.edge_v = np.asarray(edge_v, dtype=np.float64)
        if abs(self.edge_u @ self.edge_v) > 1e-9 * \
                np.linalg.norm(self.edge_u) * np.linalg.norm(self.edge_v):
            raise GeometryError("panel edges must be orthogonal")
        self.normal = unit(np.cross(self.edge_u, self.edge_v))
        self._inv_uu = 1.0 / (self.edge_u @ self.edge_u)
        self._inv_vv = 1.0 / (self.edge_v @ self.edge_v)
        self.material = material

    def bounds(self):
        corners = self.origin + np.array([
            [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0],
        ]) @ np.stack([self.edge_u, self.edge_v, np.zeros(3)])
        return corners.min(axis=0), corners.max(axis=0)

    def contains(self, p):
        p = np.atleast_2d(p)
        return np.zeros(p.shape[0], dtype=bool)

    def intersect(self, o, d):
        denom = d @ self.normal
        safe = np.abs(denom) > _PARALLEL_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((self.origin - o) @ self.normal) / denom
        t_eval = np.where(safe, t, 0.0)     # keep parallel rays off the plane math
        q = o + t_eval[:, None] * d - self.origin
        alpha = (q @ self.edge_u) * self._inv_uu
        beta = (q @ self.edge_v) * self._inv_vv
        ok = safe & (t > 0.0) & (alpha >= 0.0) & (alpha <= 1.0) & \
            (beta >= 0.0) & (beta <= 1.0)
        t = np.where(ok, t, np.inf)
        normal = np.broadcast_to(self.normal, o.shape).copy()
        return t, normal


@dataclass
class Room:
    """Axis-aligned room; the scene lives in its interior."""

    lo: np.ndarray
    hi: np.ndarray
    wall_albedo: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lo = _as_point(self.lo)
        self.hi = _as_point(self.hi)
        if not np.all(self.hi > self.lo):
            raise GeometryError("room needs hi > lo on every axis")
        albedo = {k: 0.7 for k in WALL_KEYS}
        albedo.update(self.wall_albedo)
        unknown = set(albedo) - set(WALL_KEYS)
        if unknown:
            raise GeometryError(f"unknown wall keys: {sorted(unknown)}")
        self.wall_albedo = albedo

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def wall_panels(self):
        """Six wall rectangles with normals pointing into the room."""
        lo, hi = self.lo, self.hi
        ext = hi - lo
        panels = []
        for key in WALL_KEYS:
            ax = "xyz".index(key[0])
            u_ax, v_ax = [i for i in range(3) if i != ax]
            origin = lo.copy()
            if key[1] == "+":
                origin[ax] = hi[ax]
                u_ax, v_ax = v_ax, u_ax  # swap to flip the normal inward
            e_u = np.zeros(3)
            e_v = np.zeros(3)
            e_u[u_ax] = ext[u_ax]
            e_v[v_ax] = ext[v_ax]
            panels.append(Panel(origin, e_u, e_v, Diffuse(self.wall_albedo[key])))
        return panels


class Scene:
    """Room interior plus object primitives (boxes, cylinders, spheres, panels)."""

    def __init__(self, room, objects=()):
        self.room = room
        self.objects = list(objects)
        # objects first so flush mirror panels win index ties against walls
        self.primitives = self.objects + room.wall_panels()
        self._validate()

    def _validate(self):
        lo, hi = self.room.lo, self.room.hi
        for k, obj in enumerate(self.objects):
            b_lo, b_hi = obj.bounds()
            if isinstance(obj, Panel):
                offsets = np.concatenate([b_lo - lo, hi - b_hi])
                if offsets.min() < -WALL_FLUSH_TOL:
                    raise GeometryError(f"panel {k} sticks out of the room")
                continue
            if not (np.all(b_lo > lo) and np.all(b_hi < hi)):
                raise GeometryError(f"object {k} is not strictly inside the room")

    @property
    def solids(self):
        return [p for p in self.objects if not isinstance(p, Panel)]

    def contains(self, points):
        """True for points inside any solid object."""
        points = np.atleast_2d(points)
        inside = np.zeros(points.shape[0], dtype=bool)
        for obj in self.solids:
            inside |= obj.contains(points)
        return inside


def intersect_rays(scene, origins, dirs, t_min=0.0, t_max=np.inf):
    """Nearest hit for a bundle of rays.

    Returns (t, normal, prim_index) with t = inf and prim_index = -1 on a
    miss. Normals are unit length and oriented against the ray direction.
    A new hit must beat the incumbent by more than TIE_EPS, so coincident
    surfaces resolve to the lower primitive index.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_n = np.zeros((n, 3))
    best_i = np.full(n, -1, dtype=np.int64)
    for idx, prim in enumerate(scene.primitives):
        t, normal = prim.intersect(origins, dirs)
        better = (t >= t_min) & (t <= t_max) & (t < best_t - TIE_EPS)
        if better.any():
            best_t[better] = t[better]
            best_n[better] = normal[better]
            best_i[better] = idx
    flip = np.einsum("ij,ij->i", best_n, dirs) > 0.0
    best_n[flip] *= -1.0
    return best_t, best_n, best_i


def intersect_ray(scene, ray):
    """Nearest scene hit of a single ray, or None on a miss."""
    t, normal, idx = intersect_rays(
        scene, ray.origin[None], ray.direction[None], ray.t_min, ray.t_max)
    if idx[0] < 0:
        return None
    prim = scene.primitives[idx[0]]
    return Hit(point=ray.origin + t[0] * ray.direction, normal=normal[0],
               distance=float(t[0]), material=prim.material, prim_index=int(idx[0]))


def segments_clear(scene, a, b, eps=SEGMENT_EPS):
    """Batched visibility: True where the open segment a->b is unobstructed.

    Both endpoints are pulled in by eps so that segments starting and ending
    on surfaces do not self-intersect. Segments shorter than 2*eps are
    trivially clear.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    d = b - a
    length = np.linalg.norm(d, axis=1)
    live = length > 2.0 * eps
    clear = np.ones(a.shape[0], dtype=bool)
    if not live.any():
        return clear
    dirs = np.zeros_like(d)
    dirs[live] = d[live] / length[live, None]
    origins = a + eps * dirs
    t_max = length - 2.0 * eps
    for prim in scene.primitives:
        todo = clear & live
        if not todo.any():
            break
        t, _ = prim.intersect(origins[todo], dirs[todo])
        blocked = t <= t_max[todo]
        if blocked.any():
            idx = np.flatnonzero(todo)[blocked]
            clear[idx] = False
    return clear


def visible(scene, a, b):
    """True when nothing blocks the open segment between points a and b."""
    a = _as_point(a)
    b = _as_point(b)
    if np.array_equal(a, b):
        raise InvalidSegmentError("visibility query needs two distinct points")
    return bool(segments_clear(scene, a[None], b[None])[0])


def ellipsoid_depth(two_bounce_path, x_i, x_c, pixel_dir):
    """Depth along a pixel ray from a laser-leg-subtracted two-bounce path.

    The unknown point p = x_c + t * pixel_dir satisfies
    |p - x_i| + |p - x_c| = two_bounce_path, the ellipsoid with foci at the
    illumination point x_i and the camera x_c. Squaring out the constraint
    gives the closed form

        t = (L^2 - |x_i - x_c|^2) / (2 * (L - pixel_dir . (x_i - x_c)))

    with L = two_bounce_path. Raises DegenerateGeometryError when the
    denominator vanishes (pixel ray through the focus at matching path) and
    NoSolutionError when the solution falls behind the camera or would give
    a negative focus distance.
    """
    x_i = _as_point(x_i)
    x_c = _as_point(x_c)
    pixel_dir = _as_point(pixel_dir)
    L = float(two_bounce_path)
    v = x_i - x_c
    denom = 2.0 * (L - pixel_dir @ v)
    if abs(denom) < _DENOM_EPS:
        raise DegenerateGeometryError(
            "ellipsoid degenerates along this pixel ray")
    t = (L * L - v @ v) / denom
    if t < 0.0 or L - t < 0.0:
        raise NoSolutionError(
            f"no forward intersection (t={t:.6g}, path={L:.6g})")
    return float(t)


def ellipsoid_depth_many(two_bounce_paths, x_i, x_c, pixel_dirs, slack=0.0):
    """Vectorized ellipsoid inversion.

    x_i may be a single point or one per path. Returns (t, valid); invalid
    entries (degenerate denominator, behind camera, negative focus leg
    beyond slack) hold NaN.
    """
    L = np.asarray(two_bounce_paths, dtype=np.float64)
    dirs = np.atleast_2d(pixel_dirs)
    x_i = np.asarray(x_i, dtype=np.float64)
    v = (x_i if x_i.ndim == 2 else x_i[None]) - np.asarray(x_c, dtype=np.float64)
    denom = 2.0 * (L - np.einsum("ij,ij->i", dirs, np.broadcast_to(v, dirs.shape)))
    num = L * L - np.einsum("ij,ij->i", v, v) * np.ones_like(L)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    valid = (np.abs(denom) >= _DENOM_EPS) & np.isfinite(t) & \
        (t >= 0.0) & (L - t >= -slack)
    return np.where(valid, t, np.nan), valid
