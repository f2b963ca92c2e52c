"""Forward renderer for two-bounce lidar transients.

Light leaves the laser, lands on a steered spot, scatters diffusely to the
surfaces seen by the camera, and a time histogram per pixel records the
returning path lengths. Rendered path families, per spot:

  spot image    laser -> spot -> camera, at the one pixel imaging the spot
  two bounce    laser -> spot -> pixel surface -> camera, where the pixel
                surface is diffuse and the spot is visible from it
  mirror bounce pixels whose primary ray hits a mirror record the two-bounce
                return of the mirror-reflected continuation point, with the
                path extended by the reflection leg

Spots that land on a mirror are re-traced through one reflection and act as
virtual sources at the diffuse point they reach, with the full folded path
counted as their laser leg. Exactly one mirror interaction per path is
simulated; deeper mirror chains are out of scope.

Deposit weights follow a fixed-power radiometric model: the laser delivers
unit power to each spot regardless of range, re-radiation is Lambertian,
and only the spot-to-surface leg carries inverse-square falloff (camera
pixels integrate an extended surface, the spot image being the point-source
exception). Uniformly scaling a scene therefore scales two-bounce weights
by one over distance squared.

Deposits are emitted grouped by spot, then family, then pixel row-major
order, and accumulated in exactly that order. Rendering a multiplexed cube
is bit-identical to summing single-spot cubes because every (spot, pixel)
pair produces at most one deposit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

from .cube import (DEFAULT_MIN_AMPLITUDE, TransientCube, accumulate_paths,
                   empty_cube)
from .geometry import (C_LIGHT, SEGMENT_EPS, Diffuse, Mirror, intersect_rays,
                       segments_clear, unit)

if TYPE_CHECKING:
    from .demux import TofMapSet

FAMILY_SPOT_IMAGE = 0
FAMILY_TWO_BOUNCE = 1
FAMILY_MIRROR = 2
ALL_FAMILIES = (FAMILY_SPOT_IMAGE, FAMILY_TWO_BOUNCE, FAMILY_MIRROR)

FWHM_TO_SIGMA = 1.0 / 2.3548

# continuation deposits closer than this to the source are dropped; the
# direct family instead skips exactly the pixel imaging the source
_NEAR_FIELD_MIN = 1e-2
_MIN_LEG = 1e-3


class RendererIntegrityError(RuntimeError):
    """The scene violated a closed-room assumption during rendering."""


@dataclass
class SpotSet:
    """Traced laser spots; mirror spots carry their virtual diffuse source."""

    point: np.ndarray           # (n, 3) first surface hit of each steering ray
    normal: np.ndarray          # (n, 3) at the first hit
    is_mirror: np.ndarray       # (n,) bool
    virtual_point: np.ndarray   # (n, 3), NaN rows for direct spots
    virtual_normal: np.ndarray  # (n, 3), NaN rows for direct spots
    laser_leg: np.ndarray       # (n,) path from laser to the effective source
    albedo: np.ndarray          # (n,) diffuse albedo at the effective source

    @property
    def n_spots(self):
        return self.point.shape[0]

    @property
    def effective_point(self):
        """Diffuse source position per spot (virtual one for mirror spots)."""
        return np.where(self.is_mirror[:, None], self.virtual_point, self.point)

    @property
    def effective_normal(self):
        return np.where(self.is_mirror[:, None], self.virtual_normal, self.normal)


@dataclass
class GBuffer:
    depth: np.ndarray           # (n_y, n_x) distance along the pixel ray
    normal: np.ndarray          # (n_y, n_x, 3) oriented toward the camera
    specular: np.ndarray        # (n_y, n_x) bool, first hit is a mirror
    intensity: np.ndarray       # (n_y, n_x) Lambertian shading proxy
    points: np.ndarray          # (n_y, n_x, 3) first-hit positions
    albedo: np.ndarray          # (n_y, n_x), NaN at mirror pixels


@dataclass
class ShadowMaskSet:
    masks: np.ndarray           # (n_spots, n_y, n_x) bool, True where lit

    @property
    def n_spots(self):
        return self.masks.shape[0]


@dataclass
class Deposits:
    """Flat list of histogram deposits, grouped by (spot, family, pixel)."""

    spot: np.ndarray
    family: np.ndarray
    v: np.ndarray
    u: np.ndarray
    path: np.ndarray            # meters
    weight: np.ndarray

    def select(self, spot_indices=None, families=None):
        keep = np.ones(self.spot.shape[0], dtype=bool)
        if spot_indices is not None:
            keep &= np.isin(self.spot, np.asarray(spot_indices))
        if families is not None:
            keep &= np.isin(self.family, np.asarray(families))
        return Deposits(*(a[keep] for a in
                          (self.spot, self.family, self.v, self.u,
                           self.path, self.weight)))


def _reflect(d, n):
    return d - 2.0 * np.einsum("ij,ij->i", d, n)[:, None] * n


def _albedo_of(prim):
    return prim.material.albedo if isinstance(prim.material, Diffuse) else np.nan


def trace_spots(scene, rig):
    """Trace steering rays to first hits, following one mirror reflection."""
    n = rig.n_spots
    origins = np.broadcast_to(rig.laser_pos, (n, 3))
    t, normal, idx = intersect_rays(scene, origins, rig.spot_dirs)
    if (idx < 0).any():
        raise RendererIntegrityError("steering ray escaped the room")
    point = origins + t[:, None] * rig.spot_dirs
    is_mirror = np.array([isinstance(scene.primitives[i].material, Mirror)
                          for i in idx])
    albedo = np.array([_albedo_of(scene.primitives[i]) for i in idx])
    laser_leg = t.copy()
    virtual_point = np.full((n, 3), np.nan)
    virtual_normal = np.full((n, 3), np.nan)
    if is_mirror.any():
        m = np.flatnonzero(is_mirror)
        r_dir = _reflect(rig.spot_dirs[m], normal[m])
        t2, n2, idx2 = intersect_rays(scene, point[m], r_dir, t_min=SEGMENT_EPS)
        if (idx2 < 0).any():
            raise RendererIntegrityError("reflected steering ray escaped the room")
        again = [isinstance(scene.primitives[i].material, Mirror) for i in idx2]
        if any(again):
            raise RendererIntegrityError(
                "steering ray hit two mirrors; only one reflection is modeled")
        virtual_point[m] = point[m] + t2[:, None] * r_dir
        virtual_normal[m] = n2
        laser_leg[m] += t2
        albedo[m] = [_albedo_of(scene.primitives[i]) for i in idx2]
    return SpotSet(point=point, normal=normal, is_mirror=is_mirror,
                   virtual_point=virtual_point, virtual_normal=virtual_normal,
                   laser_leg=laser_leg, albedo=albedo)


def render_gbuffer(scene, rig):
    """Primary-ray geometry buffers. Mirror pixels report the mirror surface."""
    cam = rig.camera
    dirs = cam.pixel_dirs().reshape(-1, 3)
    origins = np.broadcast_to(cam.position, dirs.shape)
    t, normal, idx = intersect_rays(scene, origins, dirs)
    if (idx < 0).any():
        raise RendererIntegrityError("camera ray escaped the room")
    shape = (cam.n_y, cam.n_x)
    points = origins + t[:, None] * dirs
    specular = np.array([isinstance(scene.primitives[i].material, Mirror)
                         for i in idx])
    albedo = np.array([_albedo_of(scene.primitives[i]) for i in idx])
    cos_cam = np.einsum("ij,ij->i", normal, -dirs)
    with np.errstate(invalid="ignore"):
        intensity = np.where(specular, 0.0,
                             albedo * np.maximum(cos_cam, 0.0) / (np.pi * t * t))
    return GBuffer(depth=t.reshape(shape),
                   normal=normal.reshape(shape + (3,)),
                   specular=specular.reshape(shape),
                   intensity=np.nan_to_num(intensity).reshape(shape),
                   points=points.reshape(shape + (3,)),
                   albedo=albedo.reshape(shape))


def render_shadow_masks(scene, rig, spots=None, gbuffer=None, deposits=None,
                        min_weight=DEFAULT_MIN_AMPLITUDE):
    """Per-spot lighting masks: True where the pixel records the spot's light.

    An entry is lit when rendering deposits spot-image or two-bounce mass of
    at least min_weight at that (spot, pixel). Occluded pixels are dark, and
    so are pixels the spot cannot light for radiometric reasons: back-facing
    or grazing geometry (a spot and a pixel on the same wall see each other
    edge-on and exchange no energy) and mirror pixels, whose recorded light
    belongs to the reflected continuation surface. The default threshold
    matches the detection floor used by the mass-based shadow demultiplexer,
    making these masks its exact noiseless ground truth.
    """
    if deposits is None:
        deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gbuffer)
    masks = np.zeros((rig.n_spots, rig.camera.n_y, rig.camera.n_x), dtype=bool)
    keep = (deposits.family != FAMILY_MIRROR) & (deposits.weight >= min_weight)
    masks[deposits.spot[keep], deposits.v[keep], deposits.u[keep]] = True
    return ShadowMaskSet(masks)


def _spot_images(cam, spots, pts, diffuse_pix):
    """Per-spot direct-image pixel, arrival path, and weight.

    pixel is -1 when the camera does not image the effective source (out of
    frame, or the pixel's surface point is farther from the source than its
    own footprint, meaning something else occupies the pixel). weight is 0
    when the imaged surface is a mirror or seen edge-on; only positive
    weights produce a deposit.
    """
    pix_scale = 2.0 * cam.tan_half_fov / cam.n_x
    eff = spots.effective_point
    n = spots.n_spots
    u_img, v_img, in_view = cam.project(eff)
    r_cam = np.linalg.norm(eff - cam.position, axis=1)
    footprint = np.maximum(pix_scale * r_cam, _MIN_LEG)
    pix = np.full(n, -1, dtype=np.int64)
    path = np.full(n, np.nan)
    weight = np.zeros(n)
    for i in range(n):
        if not in_view[i]:
            continue
        p = int(v_img[i]) * cam.n_x + int(u_img[i])
        if np.linalg.norm(pts[p] - eff[i]) > 1.5 * footprint[i]:
            continue
        pix[i] = p
        path[i] = spots.laser_leg[i] + r_cam[i]
        if diffuse_pix[p]:
            cos = max(float(spots.effective_normal[i]
                            @ unit(cam.position - eff[i])), 0.0)
            weight[i] = spots.albedo[i] * cos / (np.pi * r_cam[i] ** 2)
    return pix, path, weight, footprint


def spot_image_paths(scene, rig, spots=None, gbuffer=None):
    """Arrival paths of the direct spot images, (n_spots, n_y, n_x).

    NaN everywhere except the pixel imaging each spot's effective source
    with positive weight, where the value is that spot's one-bounce path.
    Demultiplexers treat these as known extra arrivals when testing
    two-bounce predictions near a spot's own image.
    """
    if spots is None:
        spots = trace_spots(scene, rig)
    if gbuffer is None:
        gbuffer = render_gbuffer(scene, rig)
    cam = rig.camera
    pix, path, weight, _ = _spot_images(cam, spots,
                                        gbuffer.points.reshape(-1, 3),
                                        ~gbuffer.specular.ravel())
    out = np.full((spots.n_spots, cam.n_y * cam.n_x), np.nan)
    hit = (pix >= 0) & (weight > 0.0)
    out[hit, pix[hit]] = path[hit]
    return out.reshape(spots.n_spots, cam.n_y, cam.n_x)


def _mirror_continuation(scene, rig, gb):
    """Reflected continuation of specular pixels (spot independent)."""
    spec = np.flatnonzero(gb.specular.ravel())
    out = {"pixels": spec}
    if spec.size == 0:
        return out
    dirs = rig.camera.pixel_dirs().reshape(-1, 3)[spec]
    p_m = gb.points.reshape(-1, 3)[spec]
    n_m = gb.normal.reshape(-1, 3)[spec]
    r_dir = _reflect(dirs, n_m)
    t, n_r, idx = intersect_rays(scene, p_m, r_dir, t_min=SEGMENT_EPS)
    if (idx < 0).any():
        raise RendererIntegrityError("mirror continuation escaped the room")
    diffuse = np.array([isinstance(scene.primitives[i].material, Diffuse)
                        for i in idx])
    point = p_m + t[:, None] * r_dir
    out.update(
        ok=diffuse,
        point=point,
        normal=n_r,
        albedo=np.array([_albedo_of(scene.primitives[i]) for i in idx]),
        mirror_leg=t,
        cos_out=np.einsum("ij,ij->i", n_r, -r_dir),
    )
    return out


def collect_deposits(scene, rig, spots=None, gbuffer=None):
    """Enumerate every histogram deposit as flat arrays.

    Rows are ordered by spot, then family, then pixel (row-major), which is
    the accumulation order render_transient relies on.
    """
    if spots is None:
        spots = trace_spots(scene, rig)
    if gbuffer is None:
        gbuffer = render_gbuffer(scene, rig)
    cam = rig.camera
    pts = gbuffer.points.reshape(-1, 3)
    nrm = gbuffer.normal.reshape(-1, 3)
    depth = gbuffer.depth.ravel()
    alb = gbuffer.albedo.ravel()
    diffuse_pix = ~gbuffer.specular.ravel()
    to_cam = (cam.position - pts) / depth[:, None]
    cos_out_cam = np.einsum("ij,ij->i", nrm, to_cam)

    cont = _mirror_continuation(scene, rig, gbuffer)

    eff = spots.effective_point
    eff_n = spots.effective_normal
    img_pix, img_path, img_w, footprints = _spot_images(cam, spots, pts,
                                                        diffuse_pix)

    cols = {k: [] for k in ("spot", "family", "v", "u", "path", "weight")}

    def emit(spot, family, pix, path, weight):
        cols["spot"].append(np.full(pix.shape[0], spot, dtype=np.int32))
        cols["family"].append(np.full(pix.shape[0], family, dtype=np.int8))
        cols["v"].append((pix // cam.n_x).astype(np.int32))
        cols["u"].append((pix % cam.n_x).astype(np.int32))
        cols["path"].append(path)
        cols["weight"].append(weight)

    for i in range(spots.n_spots):
        e = eff[i]
        n_e = eff_n[i]
        rho_e = spots.albedo[i]
        leg = spots.laser_leg[i]
        footprint = footprints[i]
        self_pix = img_pix[i]

        if img_w[i] > 0.0:
            emit(i, FAMILY_SPOT_IMAGE, np.array([self_pix]),
                 np.array([img_path[i]]), np.array([img_w[i]]))

        # two-bounce returns at diffuse pixels seeing the source
        d_vec = pts - e
        dist = np.linalg.norm(d_vec, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            d_hat = d_vec / dist[:, None]
        cos_e = d_hat @ n_e
        cos_in = -np.einsum("ij,ij->i", d_hat, nrm)
        cand = diffuse_pix & (dist > _MIN_LEG) & (cos_e > 0.0) & \
            (cos_in > 0.0) & (cos_out_cam > 0.0)
        if self_pix >= 0:
            cand[self_pix] = False
        pix = np.flatnonzero(cand)
        if pix.size:
            lit = segments_clear(scene, np.broadcast_to(e, (pix.size, 3)),
                                 pts[pix])
            pix = pix[lit]
        if pix.size:
            w = rho_e * alb[pix] * cos_e[pix] * cos_in[pix] * \
                cos_out_cam[pix] / (np.pi ** 2 * dist[pix] ** 2)
            emit(i, FAMILY_TWO_BOUNCE, pix, leg + dist[pix] + depth[pix], w)

        # mirror pixels observe the continuation point's return
        if cont["pixels"].size and not spots.is_mirror[i]:
            ok = cont["ok"].copy()
            d_vec = cont["point"] - e
            dist = np.linalg.norm(d_vec, axis=1)
            ok &= dist > max(_NEAR_FIELD_MIN, 1.5 * footprint)
            with np.errstate(invalid="ignore", divide="ignore"):
                d_hat = d_vec / dist[:, None]
            cos_e = d_hat @ n_e
            cos_in = -np.einsum("ij,ij->i", d_hat, cont["normal"])
            ok &= (cos_e > 0.0) & (cos_in > 0.0) & (cont["cos_out"] > 0.0)
            rows = np.flatnonzero(ok)
            if rows.size:
                lit = segments_clear(scene,
                                     np.broadcast_to(e, (rows.size, 3)),
                                     cont["point"][rows])
                rows = rows[lit]
            if rows.size:
                pix = cont["pixels"][rows]
                w = rho_e * cont["albedo"][rows] * cos_e[rows] * \
                    cos_in[rows] * cont["cos_out"][rows] / \
                    (np.pi ** 2 * dist[rows] ** 2)
                path = leg + dist[rows] + cont["mirror_leg"][rows] + depth[pix]
                emit(i, FAMILY_MIRROR, pix, path, w)

    if not cols["spot"]:
        z = np.zeros(0)
        return Deposits(z.astype(np.int32), z.astype(np.int8),
                        z.astype(np.int32), z.astype(np.int32), z, z)
    return Deposits(*(np.concatenate(cols[k]) for k in
                      ("spot", "family", "v", "u", "path", "weight")))


def render_transient(scene, rig, cfg, spots=None, gbuffer=None,
                     spot_indices=None, families=None, deposits=None):
    """Render the transient cube; optionally restrict spots or path families."""
    if deposits is None:
        deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gbuffer)
    if spot_indices is not None or families is not None:
        deposits = deposits.select(spot_indices, families)
    cube = empty_cube(rig.camera.n_y, rig.camera.n_x, cfg)
    # Accumulate one spot at a time into a scratch buffer and add buffers in
    # spot order.  A joint multiplexed render then performs the exact same
    # float32 additions as summing single-spot renders, so linearity over
    # spots holds bit for bit.
    buf = np.empty_like(cube.data)
    for s in np.unique(deposits.spot):
        sel = deposits.spot == s
        buf[...] = 0.0
        accumulate_paths(buf, deposits.v[sel], deposits.u[sel],
                         deposits.path[sel], deposits.weight[sel], cfg)
        cube.data += buf
    return cube


def render_calibrated(tof, cfg):
    """Unit-amplitude cube from per-spot time-of-flight maps.

    Every finite ToF entry deposits weight 1 at its path length, so the
    result is an occupancy indicator of predicted arrival times rather than
    a radiometric rendering.
    """
    t = tof.tof
    n_spots, n_y, n_x = t.shape
    cube = empty_cube(n_y, n_x, cfg)
    flat = t.reshape(n_spots, -1)
    buf = np.empty_like(cube.data)
    for i in range(n_spots):
        pix = np.flatnonzero(np.isfinite(flat[i]))
        if pix.size == 0:
            continue
        # Per-spot scratch buffer, same reasoning as render_transient: keeps
        # spot-sum linearity bit-exact.
        buf[...] = 0.0
        accumulate_paths(buf, pix // n_x, pix % n_x,
                         flat[i][pix] * C_LIGHT, np.ones(pix.size), cfg)
        cube.data += buf
    return cube


def render_light_in_flight(tof, shadows, cfg):
    """Per-spot cubes whose frames animate the shadow-masked wavefront."""
    t = tof.tof
    n_spots, n_y, n_x = t.shape
    cubes = []
    for i in range(n_spots):
        cube = empty_cube(n_y, n_x, cfg)
        lit = shadows.masks[i].ravel()
        pix = np.flatnonzero(np.isfinite(t[i].ravel()) & lit)
        if pix.size:
            accumulate_paths(cube.data, pix // n_x, pix % n_x,
                             t[i].ravel()[pix] * C_LIGHT, np.ones(pix.size), cfg)
        cubes.append(cube)
    return cubes


def apply_sensor_model(cube, pulse_kernel=None, poisson_scale=0.0,
                       jitter_fwhm=0.0, seed=0, peak_reference=None):
    """Sensor response: pulse convolution, scaling, timing jitter, shot noise.

    Stages, in order: temporal convolution with a normalized pulse kernel
    (anchored at its center bin), rescaling so that peak_reference (or the
    cube maximum) maps to poisson_scale expected counts, Gaussian timing
    jitter of the given FWHM applied as a mass-redistributing blur, and
    per-bin Poisson sampling. poisson_scale = 0 disables the rescale and the
    sampling, so an identity kernel with zero jitter returns the cube
    unchanged.

    Sampling uses one counter-based stream per pixel keyed by (seed, pixel
    index), which makes the result independent of any pixel-level work
    decomposition.
    """
    if poisson_scale < 0.0 or jitter_fwhm < 0.0:
        raise ValueError("poisson_scale and jitter_fwhm must be nonnegative")
    data = cube.data.astype(np.float64)
    if pulse_kernel is not None:
        kernel = np.asarray(pulse_kernel, dtype=np.float64)
        if kernel.ndim != 1 or kernel.size < 1:
            raise ValueError("pulse kernel must be a 1-D array")
        if kernel.size > cube.n_t:
            raise ValueError("pulse kernel longer than the time axis")
        if abs(kernel.sum() - 1.0) > 1e-8:
            raise ValueError("pulse kernel must sum to 1")
        data = ndimage.convolve1d(data, kernel, axis=2, mode="constant")
    if poisson_scale > 0.0:
        ref = float(data.max()) if peak_reference is None else float(peak_reference)
        if ref <= 0.0:
            raise ValueError("no positive reference amplitude to scale")
        data *= poisson_scale / ref
    if jitter_fwhm > 0.0:
        sigma_bins = jitter_fwhm * FWHM_TO_SIGMA / cube.delta
        data = ndimage.gaussian_filter1d(data, sigma_bins, axis=2,
                                         mode="constant", truncate=6.0)
    if poisson_scale > 0.0:
        lam = np.maximum(data.reshape(-1, cube.n_t), 0.0)
        counts = np.empty_like(lam)
        for pix in range(lam.shape[0]):
            gen = np.random.Generator(
                np.random.Philox(key=seed, counter=[0, 0, pix, 0]))
            counts[pix] = gen.poisson(lam[pix])
        data = counts.reshape(data.shape)
    return TransientCube(data.astype(np.float32), cube.delta,
                         cube.gate_path_min)
