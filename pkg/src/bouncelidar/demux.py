"""Analytic inversion of transient captures.

Given known spot positions, a pixel's two-bounce arrival time constrains
its surface point to an ellipsoid with foci at the spot and the camera;
intersecting that with the pixel ray gives depth directly (see
geometry.ellipsoid_depth). The routines here extract histogram peaks, turn
them into depth for scanned (one cube per spot) and multiplexed (single
cube, unknown spot association) captures, split measured cubes into
per-spot shadow masks, and flag mirror pixels by their arrival-time
signature: a mirror pixel shows no mass at the times a diffuse surface at
its depth would produce, and extra mass strictly later than all of them.

Binned peaks are read at bin centers, so a one-bin path quantization error
is inherent to everything downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import DEFAULT_MIN_AMPLITUDE, TransientCube
from .geometry import C_LIGHT, ellipsoid_depth_many


class GeometryMismatchError(ValueError):
    """Operands disagree on cube geometry (shape, bin width, or gate)."""


class AnchorError(ValueError):
    """Anchor set cannot determine an affine depth correction."""


@dataclass
class DepthMap:
    values: np.ndarray          # (n_y, n_x) meters along the pixel ray
    valid: np.ndarray           # (n_y, n_x) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.valid is None:
            self.valid = np.isfinite(self.values)
        self.valid = np.asarray(self.valid, dtype=bool)

    def masked(self):
        return np.where(self.valid, self.values, np.nan)


@dataclass
class TofMapSet:
    tof: np.ndarray             # (n_spots, n_y, n_x) seconds, NaN where invalid

    @property
    def n_spots(self):
        return self.tof.shape[0]


@dataclass
class PeakList:
    bins: np.ndarray            # strictly increasing bin indices
    amplitudes: np.ndarray


def noisy_min_amplitude(background_rate):
    """Detection threshold for shot-noise captures: three sigma above background."""
    return 3.0 * np.sqrt(background_rate)


def _local_max_mask(data, min_amplitude):
    """Plateau-left local maxima along the last axis, above threshold."""
    left = np.empty_like(data)
    left[..., 0] = -np.inf
    left[..., 1:] = data[..., :-1]
    right = np.empty_like(data)
    right[..., -1] = -np.inf
    right[..., :-1] = data[..., 1:]
    return (data > left) & (data >= right) & (data > min_amplitude)


def extract_peaks(hist, min_amplitude=DEFAULT_MIN_AMPLITUDE,
                  min_separation_bins=1):
    """Local maxima of one histogram, greedily suppressed within a window.

    Candidates are local maxima above min_amplitude (a flat run counts
    once, at its left edge). Candidates are accepted by decreasing
    amplitude, ties toward the lower bin, and an accepted peak suppresses
    any candidate within min_separation_bins of it. Peaks return sorted by
    bin index.
    """
    hist = np.asarray(hist, dtype=np.float64)
    if hist.ndim != 1:
        raise ValueError("extract_peaks expects a 1-D histogram")
    cand = np.flatnonzero(_local_max_mask(hist, min_amplitude))
    if cand.size == 0 or min_separation_bins <= 1:
        return PeakList(cand, hist[cand])
    order = cand[np.lexsort((cand, -hist[cand]))]
    kept = []
    for b in order:
        if all(abs(b - k) >= min_separation_bins for k in kept):
            kept.append(b)
    kept = np.array(sorted(kept), dtype=np.int64)
    return PeakList(kept, hist[kept])


def two_bounce_tof(depth, rig, spots):
    """Predicted two-bounce arrival times from a depth map.

    For spot i and a pixel surface point p unprojected from depth,
    t = (laser_leg_i + |p - e_i| + |p - camera|) / c with e_i the spot's
    effective (possibly virtual) source. Invalid depths give NaN.
    """
    if isinstance(depth, DepthMap):
        d, valid = depth.values, depth.valid
    else:
        d = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(d)
    cam = rig.camera
    pts = cam.unproject(np.where(valid, d, 1.0)).reshape(-1, 3)
    eff = spots.effective_point
    dist = np.linalg.norm(pts[None, :, :] - eff[:, None, :], axis=2)
    path = spots.laser_leg[:, None] + dist + d.ravel()[None, :]
    tof = (path / C_LIGHT).reshape(spots.n_spots, cam.n_y, cam.n_x)
    tof[:, ~valid] = np.nan
    return TofMapSet(tof)


def _invert_paths(paths, eff, cam_pos, dirs, bin_width):
    """Ellipsoid inversion of laser-leg-subtracted paths with a quantization
    slack, including the degenerate pixel-through-source fallback."""
    t, valid = ellipsoid_depth_many(paths, eff, cam_pos, dirs,
                                    slack=bin_width)
    v = np.atleast_2d(eff) - cam_pos
    v_len = np.linalg.norm(v, axis=-1) * np.ones_like(paths)
    degen = ~valid & (np.abs(paths - v_len) <= 2.0 * bin_width)
    t = np.where(degen, 0.5 * (paths + v_len), t)
    return t, valid | degen


def depth_from_scanned(per_spot_cubes, rig, spots,
                       min_amplitude=DEFAULT_MIN_AMPLITUDE):
    """Depth from one cube per spot.

    Per pixel and spot, the latest confident peak is the two-bounce return
    (any one-bounce spot image arrives earlier along the same histogram).
    Subtracting the laser leg and inverting the ellipsoid gives a per-spot
    estimate; the map is the per-pixel median over spots. Pixels with no
    confident return in any cube are invalid. The pixel imaging the spot
    itself degenerates to the confocal case and resolves to the source
    range.
    """
    if len(per_spot_cubes) != spots.n_spots:
        raise GeometryMismatchError(
            f"expected {spots.n_spots} cubes, got {len(per_spot_cubes)}")
    cam = rig.camera
    ref = per_spot_cubes[0]
    dirs = cam.pixel_dirs().reshape(-1, 3)
    eff = spots.effective_point
    estimates = np.full((spots.n_spots, cam.n_y * cam.n_x), np.nan)
    for i, cube in enumerate(per_spot_cubes):
        if not cube.same_geometry(ref):
            raise GeometryMismatchError("per-spot cubes disagree on geometry")
        data = cube.data.reshape(-1, cube.n_t)
        mask = _local_max_mask(data.astype(np.float64), min_amplitude)
        has = mask.any(axis=1)
        if not has.any():
            continue
        last = cube.n_t - 1 - np.argmax(mask[:, ::-1], axis=1)
        paths = cube.path_of_bin_center(last) - spots.laser_leg[i]
        t, ok = _invert_paths(paths, eff[i], cam.position, dirs,
                              cube.bin_width)
        estimates[i, has & ok] = t[has & ok]
    values = np.full(estimates.shape[1], np.nan)
    any_est = np.isfinite(estimates).any(axis=0)
    if any_est.any():
        values[any_est] = np.nanmedian(estimates[:, any_est], axis=0)
    valid = np.isfinite(values)
    return DepthMap(values.reshape(cam.n_y, cam.n_x),
                    valid.reshape(cam.n_y, cam.n_x))


def depth_from_multiplexed(cube, rig, spots, max_depth,
                           depth_bin_size=None,
                           min_amplitude=DEFAULT_MIN_AMPLITUDE):
    """Depth from a single multiplexed cube via candidate voting.

    Every (extracted peak, spot) pairing proposes a depth through ellipsoid
    inversion. Candidates outside (0, max_depth) are discarded, the rest
    are discretized to depth_bin_size (default: one path bin), and the most
    voted bin wins, ties toward the nearer depth. The returned value is the
    mean of the winning bin's candidates, so a single-spot capture
    degenerates to the scanned estimate.
    """
    cam = rig.camera
    if depth_bin_size is None:
        depth_bin_size = cube.bin_width
    dirs = cam.pixel_dirs().reshape(-1, 3)
    eff = spots.effective_point
    legs = spots.laser_leg
    data = cube.data.reshape(-1, cube.n_t).astype(np.float64)
    peak_mask = _local_max_mask(data, min_amplitude)
    values = np.full(cam.n_y * cam.n_x, np.nan)
    n = spots.n_spots
    for pix in np.flatnonzero(peak_mask.any(axis=1)):
        bins = np.flatnonzero(peak_mask[pix])
        centers = cube.path_of_bin_center(bins)
        paths = (centers[:, None] - legs[None, :]).ravel()
        eff_rep = np.tile(eff, (bins.size, 1))
        dir_rep = np.broadcast_to(dirs[pix], (paths.size, 3))
        t, ok = _invert_paths(paths, eff_rep, cam.position, dir_rep,
                              cube.bin_width)
        t = t[ok & (t > 0.0) & (t < max_depth)]
        if t.size == 0:
            continue
        kidx = np.floor(t / depth_bin_size).astype(np.int64)
        uniq, counts = np.unique(kidx, return_counts=True)
        win = uniq[np.flatnonzero(counts == counts.max())[0]]
        values[pix] = t[kidx == win].mean()
    values = values.reshape(cam.n_y, cam.n_x)
    return DepthMap(values, np.isfinite(values))


def shadow_transient(measured, calibrated):
    """Clamped difference calibrated - measured.

    With unit-amplitude calibration the result is indicator-level evidence
    of missing returns, not a radiometric quantity; compare against a
    support-normalized measurement.
    """
    if not measured.same_geometry(calibrated):
        raise GeometryMismatchError("measured and calibrated cubes disagree")
    diff = np.maximum(calibrated.data - measured.data, 0.0)
    return TransientCube(diff, measured.delta, measured.gate_path_min)


def _prefix_sums(cube):
    data = cube.data.reshape(-1, cube.n_t)
    c = np.zeros((data.shape[0], cube.n_t + 1))
    np.cumsum(data, axis=1, dtype=np.float64, out=c[:, 1:])
    return c


def _window_mass(prefix, bins, tol):
    """Histogram mass within +-tol bins of each predicted bin."""
    n_t = prefix.shape[1] - 1
    lo = np.clip(bins - tol, 0, n_t)
    hi = np.clip(bins + tol + 1, 0, n_t)
    rows = np.arange(prefix.shape[0])
    return prefix[rows, hi] - prefix[rows, lo]


def demux_shadows(cube, tof, tolerance_bins=1,
                  min_amplitude=DEFAULT_MIN_AMPLITUDE, specular_mask=None):
    """Per-spot shadow masks from a multiplexed cube and predicted ToF.

    A spot is lit at a pixel when the measured histogram holds at least
    min_amplitude of mass within tolerance_bins of the predicted arrival
    bin. Pixels with no prediction (invalid depth, out-of-gate time) and
    pixels under an optional specular mask default to lit: downstream
    carving treats shadow as occupancy evidence, so unsupported shadows are
    the costlier mistake. Nearby returns from other spots alias into the
    tolerance window; see separation_mask for the collision test.
    """
    if tof.tof.shape[1:] != cube.data.shape[:2]:
        raise GeometryMismatchError("ToF maps and cube disagree on image size")
    prefix = _prefix_sums(cube)
    masks = np.ones((tof.n_spots,) + cube.data.shape[:2], dtype=bool)
    for i in range(tof.n_spots):
        t = tof.tof[i].ravel()
        bins = np.where(np.isfinite(t), cube.bin_of_time(np.nan_to_num(t)), -1)
        in_gate = (bins >= 0) & (bins < cube.n_t)
        mass = _window_mass(prefix, np.clip(bins, 0, cube.n_t - 1),
                            tolerance_bins)
        lit = np.where(in_gate, mass >= min_amplitude, True)
        masks[i] = lit.reshape(cube.data.shape[:2])
    if specular_mask is not None:
        masks[:, np.asarray(specular_mask, dtype=bool)] = True
    from .renderer import ShadowMaskSet
    return ShadowMaskSet(masks)


def _stacked_paths(cube, tof, extra_paths):
    """Flattened path rows (spots first, then extras) with usable entries
    marked: finite and inside the gate."""
    paths = tof.tof * C_LIGHT
    if extra_paths is not None:
        paths = np.concatenate([paths,
                                np.asarray(extra_paths, dtype=np.float64)])
    flat = paths.reshape(paths.shape[0], -1)
    usable = np.isfinite(flat) & (flat >= cube.gate_path_min) & \
        (flat < cube.gate_path_min + cube.n_t * cube.bin_width)
    return flat, usable


def unmix_amplitudes(cube, tof, extra_paths=None):
    """Per-arrival deposited mass, by nonnegative least squares per pixel.

    The noiseless forward model is linear: each arrival splits its unknown
    mass between the two bins straddling its continuous bin coordinate.
    With arrival positions known (predicted two-bounce paths from the ToF
    maps, plus any extra_paths such as direct spot images), solving for the
    masses over the involved bins recovers per-spot amplitudes exactly even
    when arrivals share bins, as long as their positions differ; a window
    test cannot split those. extra_paths rows are appended after the spot
    rows in the output. Entries are NaN where the prediction is absent or
    out of gate. Arrivals closer than a small fraction of a bin are
    numerically one arrival: only the sum of their amplitudes is
    meaningful, which is what unmix_shadows relies on.
    """
    from scipy.optimize import nnls

    data = cube.data.reshape(-1, cube.n_t).astype(np.float64)
    flat, usable = _stacked_paths(cube, tof, extra_paths)
    g = np.where(usable, (flat - cube.gate_path_min) / cube.bin_width - 0.5,
                 0.0)
    k0 = np.floor(g).astype(np.int64)
    f = g - k0
    # mirror the accumulator's boundary clamps so columns match deposits
    f[k0 < 0] = 0.0
    k0[k0 < 0] = 0
    f[k0 + 1 > cube.n_t - 1] = 1.0
    k1 = np.minimum(k0 + 1, cube.n_t - 1)
    k0 = np.minimum(k0, cube.n_t - 1)

    amps = np.full(flat.shape, np.nan)
    for p in range(flat.shape[1]):
        rows = np.flatnonzero(usable[:, p])
        if rows.size == 0:
            continue
        bins, inv = np.unique(np.concatenate([k0[rows, p], k1[rows, p]]),
                              return_inverse=True)
        a = np.zeros((bins.size, rows.size))
        idx = np.arange(rows.size)
        np.add.at(a, (inv[:rows.size], idx), 1.0 - f[rows, p])
        np.add.at(a, (inv[rows.size:], idx), f[rows, p])
        amps[rows, p] = nnls(a, data[p, bins])[0]
    return amps.reshape((flat.shape[0],) + tof.tof.shape[1:])


def _decidable_totals(cube, flat_paths, usable, amps, coincident_bins):
    """Per-arrival amplitude totals at the decidable granularity.

    Arrivals sharing a bin form a block; the unmixed amplitudes inside a
    block are individually reliable only if the block has at least as many
    bins as arrival groups and no two groups sit closer than
    coincident_bins. Where that fails, only sums are trustworthy: every
    null direction of the split-deposit system sums to zero, so chain and
    block totals are exact even when the member split is arbitrary. Each
    arrival therefore reports the total of its smallest trustworthy group:
    its coincident chain inside a solvable block, or its whole block
    otherwise.
    """
    totals = np.nan_to_num(amps.reshape(usable.shape)).copy()
    pos = np.where(usable,
                   (flat_paths - cube.gate_path_min) / cube.bin_width - 0.5,
                   0.0)
    k0 = np.clip(np.floor(pos).astype(np.int64), 0, cube.n_t - 1)
    for p in np.flatnonzero(usable.sum(axis=0) > 1):
        rows = np.flatnonzero(usable[:, p])
        order = rows[np.argsort(pos[rows, p])]
        q = pos[order, p]
        gap = np.diff(q)
        # consecutive arrivals share a bin iff their k0 differ by <= 1
        kk = k0[order, p]
        new_block = np.ones(order.size, dtype=bool)
        new_block[1:] = np.diff(kk) > 1
        block = np.cumsum(new_block) - 1
        new_chain = np.ones(order.size, dtype=bool)
        new_chain[1:] = gap > coincident_bins
        chain = np.cumsum(new_chain) - 1
        amp = totals[order, p]
        chain_tot = np.bincount(chain, weights=amp)
        block_tot = np.bincount(block, weights=amp)
        n_chains = np.bincount(block, weights=new_chain.astype(float))
        span = np.bincount(block, weights=None, minlength=block[-1] + 1)
        first = np.searchsorted(block, np.arange(block[-1] + 1))
        n_bins = kk[first + span.astype(np.int64) - 1] + 1 - kk[first] + 1
        solvable = n_chains <= n_bins
        out = np.where(solvable[block], chain_tot[chain], block_tot[block])
        totals[order, p] = out
    return totals


def _amplitude_caps(cube, flat_paths, usable):
    """Upper bound on each arrival's mass from its own two bins.

    An arrival depositing a with split (1-f, f) cannot exceed y0/(1-f) or
    y1/f where y are the measured bin contents, whatever the other arrivals
    contribute. The bound is valid for any nonnegative decomposition and
    turns a group judged lit by its total into a dark entry when the
    member's own bins cannot carry the threshold.
    """
    data = cube.data.reshape(-1, cube.n_t).astype(np.float64)
    g = np.where(usable,
                 (flat_paths - cube.gate_path_min) / cube.bin_width - 0.5,
                 0.0)
    k0 = np.floor(g).astype(np.int64)
    f = g - k0
    f[k0 < 0] = 0.0
    k0[k0 < 0] = 0
    f[k0 + 1 > cube.n_t - 1] = 1.0
    k1 = np.minimum(k0 + 1, cube.n_t - 1)
    k0 = np.minimum(k0, cube.n_t - 1)
    pix = np.arange(flat_paths.shape[1])[None, :]
    y0 = data[pix, k0]
    y1 = data[pix, k1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cap = np.minimum(np.where(f < 1.0, y0 / (1.0 - f), np.inf),
                         np.where(f > 0.0, y1 / f, np.inf))
    return np.where(usable, cap, np.inf)


def unmix_shadows(cube, tof, min_amplitude=DEFAULT_MIN_AMPLITUDE,
                  image_paths=None, specular_mask=None, coincident_bins=0.05):
    """Per-spot shadow masks by amplitude unmixing of a multiplexed cube.

    A spot is lit at a pixel when its unmixed two-bounce amplitude reaches
    min_amplitude, or, at the pixel imaging the spot itself, when the
    direct image amplitude does (pass image_paths for that). Unlike the
    demux_shadows window test this attributes shared-bin mass to the
    arrival positions that explain it, so a shadowed spot stays dark when
    another spot's return lands nearby. Arrivals within coincident_bins of
    each other cannot be attributed by any method; they are judged on their
    combined mass, erring toward lit. Pixels with no in-gate prediction and
    optional specular pixels also default to lit, as in demux_shadows.
    """
    if tof.tof.shape[1:] != cube.data.shape[:2]:
        raise GeometryMismatchError("ToF maps and cube disagree on image size")
    if image_paths is not None and np.shape(image_paths) != tof.tof.shape:
        raise GeometryMismatchError("image_paths must be one map per spot")
    amps = unmix_amplitudes(cube, tof, extra_paths=image_paths)
    flat, usable = _stacked_paths(cube, tof, image_paths)
    totals = _decidable_totals(cube, flat, usable, amps, coincident_bins)
    ok = np.minimum(totals, _amplitude_caps(cube, flat, usable)) \
        >= min_amplitude
    n = tof.n_spots
    shape = tof.tof.shape
    lit = np.where(usable[:n].reshape(shape), ok[:n].reshape(shape), True)
    if image_paths is not None:
        lit |= usable[n:].reshape(shape) & ok[n:].reshape(shape)
    if specular_mask is not None:
        lit[:, np.asarray(specular_mask, dtype=bool)] = True
    from .renderer import ShadowMaskSet
    return ShadowMaskSet(lit)


@dataclass
class SpecularConfig:
    tolerance_bins: int = 1
    min_amplitude: float = DEFAULT_MIN_AMPLITUDE
    min_spots: int | None = None    # default: half the spots, rounded up


def detect_specular(cube, depth, rig, spots, cfg=None):
    """Flag pixels whose transient contradicts a diffuse surface at their depth.

    Treating the pixel depth as a diffuse surface predicts a direct-return
    time and one two-bounce time per spot (no occlusions assumed). A pixel
    is flagged when (a) at least min_spots of those predictions have no
    measured mass and there is no direct return, and (b) the histogram
    holds mass that none of the predicted windows explains. A diffuse
    surface at the stated depth puts every arrival inside a predicted
    window, so (b) never fires on one; light reaching the camera off a
    mirror travels farther than the matching straight-line path, landing
    outside its own spot's window, while plain shadowing produces (a) but
    never (b).
    """
    cfg = cfg or SpecularConfig()
    min_spots = cfg.min_spots
    if min_spots is None:
        min_spots = (spots.n_spots + 1) // 2
    if isinstance(depth, DepthMap):
        d, valid = depth.values, depth.valid
    else:
        d = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(d)
    cam = rig.camera
    tof = two_bounce_tof(DepthMap(d, valid), rig, spots)
    prefix = _prefix_sums(cube)
    n_pix = cam.n_y * cam.n_x
    tol = cfg.tolerance_bins

    missing = np.zeros(n_pix, dtype=np.int64)
    covered = np.zeros((n_pix, cube.n_t), dtype=bool)
    cols = np.arange(cube.n_t)

    def cover(bins, in_gate):
        lo = np.clip(bins - tol, 0, cube.n_t)[:, None]
        hi = np.clip(bins + tol, -1, cube.n_t - 1)[:, None]
        covered[in_gate] |= ((cols >= lo) & (cols <= hi))[in_gate]

    for i in range(spots.n_spots):
        t = tof.tof[i].ravel()
        finite = np.isfinite(t)
        bins = np.where(finite, cube.bin_of_time(np.nan_to_num(t)), -1)
        in_gate = (bins >= 0) & (bins < cube.n_t)
        mass = _window_mass(prefix, np.clip(bins, 0, cube.n_t - 1), tol)
        missing += in_gate & (mass < cfg.min_amplitude)
        cover(bins, in_gate)

    # hypothetical direct return at the pixel's own depth
    pts = cam.unproject(np.where(valid, d, 1.0)).reshape(-1, 3)
    direct = np.linalg.norm(pts - rig.laser_pos, axis=1)
    direct += np.where(valid.ravel(), d.ravel(), np.nan)
    dbins = np.where(valid.ravel(),
                     cube.bin_of_path(np.nan_to_num(direct)), -1)
    in_gate = (dbins >= 0) & (dbins < cube.n_t)
    dmass = _window_mass(prefix, np.clip(dbins, 0, cube.n_t - 1), tol)
    has_direct = in_gate & (dmass >= cfg.min_amplitude)
    cover(dbins, in_gate)

    # each spot's direct image arrives with the spot's own geometry, which
    # can land a few bins off the windows implied by the pixel-center depth
    eff = spots.effective_point
    u_img, v_img, in_view = cam.project(eff)
    img_path = spots.laser_leg + np.linalg.norm(eff - cam.position, axis=1)
    ibins = cube.bin_of_path(img_path)
    ok = in_view & (ibins >= 0) & (ibins < cube.n_t)
    for r, b in zip(v_img[ok] * cam.n_x + u_img[ok], ibins[ok]):
        covered[r, max(b - tol, 0):b + tol + 1] = True

    # the split rule spreads one arrival across two adjacent bins, so pad
    # the coverage by one bin before asking for unexplained mass
    padded = covered.copy()
    padded[:, 1:] |= covered[:, :-1]
    padded[:, :-1] |= covered[:, 1:]
    data = cube.data.reshape(n_pix, cube.n_t)
    unexplained = (data * ~padded).sum(axis=1) >= cfg.min_amplitude

    flag = valid.ravel() & ~has_direct & (missing >= min_spots) & unexplained
    return flag.reshape(cam.n_y, cam.n_x)


def rescale_with_anchors(depth, anchor_uv, anchor_depth):
    """Affine depth correction from known anchor points.

    Solves least squares for (a, b) in a * depth + b = anchor over the
    anchor pixels and applies it to the whole map. Raises AnchorError when
    the system is rank deficient (fewer than two anchors, or all anchor
    depths equal).
    """
    if isinstance(depth, DepthMap):
        d, valid = depth.values, depth.valid
    else:
        d = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(d)
    anchor_uv = np.atleast_2d(np.asarray(anchor_uv, dtype=np.int64))
    z = np.asarray(anchor_depth, dtype=np.float64)
    if anchor_uv.shape[0] != z.shape[0]:
        raise AnchorError("anchor pixel and depth counts differ")
    du = d[anchor_uv[:, 1], anchor_uv[:, 0]]
    ok = valid[anchor_uv[:, 1], anchor_uv[:, 0]]
    du, z = du[ok], z[ok]
    if du.size < 2 or np.ptp(du) < 1e-12:
        raise AnchorError("anchors are rank deficient for an affine fit")
    design = np.stack([du, np.ones_like(du)], axis=1)
    (a, b), *_ = np.linalg.lstsq(design, z, rcond=None)
    return DepthMap(a * d + b, valid.copy()), (float(a), float(b))


def separation_mask(tof, cube, min_separation_bins=2, extra_paths=None,
                    specular=None):
    """Per-(spot, pixel) mask of collision-free predicted arrivals.

    Entry (i, pixel) is True when spot i's predicted arrival lands inside
    the gate and more than min_separation_bins bins from every other finite
    prediction at that pixel, including any extra paths (e.g. the direct
    spot image at the pixel observing a spot). Deposits straddle two bins
    and window tests read +-1 bin, so the default of 2 guarantees a trusted
    window holds mass from its own return only. Mirror pixels can be zeroed
    via the specular mask since their true arrivals are not at the
    predicted times.

    A finite extra path for spot i itself marks the pixel imaging spot i.
    The renderer never leaves a two-bounce return there, so the window test
    has nothing to observe and the entry is always marked untrusted.
    """
    finite = np.isfinite(tof.tof)
    bins = cube.bin_of_path(np.nan_to_num(tof.tof * C_LIGHT)).astype(np.float64)
    in_gate = finite & (bins >= 0) & (bins < cube.n_t)
    bins[~finite] = np.nan
    stack = [bins]
    if extra_paths is not None:
        extra_paths = np.asarray(extra_paths, dtype=np.float64)
        eb = cube.bin_of_path(np.nan_to_num(extra_paths)).astype(np.float64)
        eb[~np.isfinite(extra_paths)] = np.nan
        stack.append(eb)
    n = tof.n_spots
    own = bins.reshape(n, -1)
    others = np.concatenate(stack, axis=0).reshape(-1, own.shape[1])
    with np.errstate(invalid="ignore"):
        gap = np.abs(own[:, None, :] - others[None, :, :])
    idx = np.arange(n)
    gap[idx, idx, :] = np.nan       # a prediction never collides with itself
    gap = np.where(np.isnan(gap), np.inf, gap)
    ok = in_gate.reshape(n, -1) & (gap.min(axis=1) > min_separation_bins)
    if extra_paths is not None:
        ok &= ~np.isfinite(extra_paths).reshape(n, -1)
    ok = ok.reshape(tof.tof.shape)
    if specular is not None:
        ok &= ~np.asarray(specular, dtype=bool)[None]
    return ok
