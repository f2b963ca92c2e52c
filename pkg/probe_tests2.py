"""Dev probe round 2: demux mismatch autopsy, novel-depth policy, hidden cube."""
import copy
import time

import numpy as np

from bouncelidar import (
    CubeConfig,
    DepthMap,
    GridConfig,
    ShadowMaskSet,
    build_scene,
    carve_occupancy,
    collect_deposits,
    demux_shadows,
    empty_room_scene,
    empty_soundness_violations,
    hidden_cube_scene,
    render_gbuffer,
    render_novel_depth,
    render_shadow_masks,
    render_transient,
    separation_mask,
    spot_image_paths,
    trace_spots,
    two_bounce_tof,
    voxel_iou,
    voxelize_scene,
    FAMILY_MIRROR,
)


def cfg_for(scene, delta=128e-12, policy="error"):
    reach = 4.0 * scene.room.diagonal
    return CubeConfig(delta=delta, n_t=1, gate_path_min=1.0,
                      oob_policy=policy).sized_for(reach, margin=1.0)


# ---- demux mismatch autopsy on box24
scene3, rig3, spec3 = empty_room_scene(24, 24, spot_grid=(3, 3), spot_span=0.9)
bspec3 = copy.deepcopy(spec3)
bspec3["objects"] = [{
    "kind": "box", "lo": [2.2, 1.6, 0.001], "hi": [2.7, 2.4, 0.9],
    "material": {"kind": "diffuse", "albedo": 0.6},
}]
sc3, rg3 = build_scene(bspec3)
sp3 = trace_spots(sc3, rg3)
gb3 = render_gbuffer(sc3, rg3)
cfg3 = cfg_for(sc3)
dep3 = collect_deposits(sc3, rg3, spots=sp3, gbuffer=gb3)
cube3 = render_transient(sc3, rg3, cfg3, spots=sp3, gbuffer=gb3, deposits=dep3)
gt3 = render_shadow_masks(sc3, rg3, spots=sp3, gbuffer=gb3, deposits=dep3)
tof3 = two_bounce_tof(DepthMap(gb3.depth, None), rg3, sp3)
img3 = spot_image_paths(sc3, rg3, spots=sp3, gbuffer=gb3)
dm3 = demux_shadows(cube3, tof3, specular_mask=gb3.specular)
sep3 = separation_mask(tof3, cube3, extra_paths=img3, specular=gb3.specular)

bad = np.argwhere((dm3.masks != gt3.masks) & sep3)
print(f"filtered mismatches: {len(bad)}")
for s, v, u in bad:
    w_gt = dep3.weight[(dep3.spot == s) & (dep3.v == v) & (dep3.u == u)
                       & (dep3.family != FAMILY_MIRROR)].sum()
    t = tof3.tof[s, v, u]
    pb = cube3.bin_of_time(t) if np.isfinite(t) else -1
    hist = cube3.data[v, u]
    lo, hi = max(pb - 1, 0), min(pb + 1, cube3.data.shape[2] - 1)
    mass = float(hist[lo:hi + 1].sum())
    others = [cube3.bin_of_time(tof3.tof[q, v, u]) for q in range(rg3.n_spots)
              if q != s and np.isfinite(tof3.tof[q, v, u])]
    print(f"  spot={s} px=({v},{u}) gt_lit={bool(gt3.masks[s, v, u])} "
          f"gt_weight={w_gt:.3e} pred_bin={pb} window_mass={mass:.3e} "
          f"other_bins={sorted(others)} img_bin={cube3.bin_of_path(img3[s, v, u]) if np.isfinite(img3[s, v, u]) else None}")
    nz = np.flatnonzero(hist[max(pb - 4, 0):pb + 5])
    print(f"    hist around: {[(int(k + max(pb - 4, 0)), float(hist[k + max(pb - 4, 0)])) for k in nz]}")

# ---- novel depth: error quantiles for both unknown policies
ne_scene, ne_rig, _ = empty_room_scene(24, 24, spot_grid=(2, 2))
ne_sp = trace_spots(ne_scene, ne_rig)
ne_gb = render_gbuffer(ne_scene, ne_rig)
ones = ShadowMaskSet(np.ones((ne_rig.n_spots, 24, 24), dtype=bool))
gcfg = GridConfig((32, 32, 32), ne_scene.room.lo, ne_scene.room.hi)
grid = carve_occupancy(DepthMap(ne_gb.depth, None), ones, ne_rig, ne_sp, gcfg)
diag = float(np.linalg.norm(gcfg.cell_size))
for policy in ("occupied", "empty"):
    nd = render_novel_depth(grid, ne_rig.camera, unknown=policy)
    both = nd.valid & np.isfinite(ne_gb.depth)
    err = np.abs(nd.values[both] - ne_gb.depth[both])
    n_over = int(np.sum(err > diag))
    print(f"novel[{policy}]: validfrac={float(np.mean(nd.valid)):.3f} "
          f"maxerr={err.max():.4f} p99={np.quantile(err, 0.99):.4f} "
          f"over_diag={n_over}/{err.size} (diag={diag:.3f})")

# where are the over-diag pixels (occupied policy)?
nd = render_novel_depth(grid, ne_rig.camera, unknown="occupied")
errmap = np.abs(nd.values - ne_gb.depth)
over = (errmap > diag) & nd.valid & np.isfinite(ne_gb.depth)
print("over-diag pixel coords (occupied):", np.argwhere(over)[:12].tolist())

# ---- hidden cube 32x32 camera, 32^3 grid
t0 = time.time()
hsc, hrg, _ = hidden_cube_scene(32, 32)
hsp = trace_spots(hsc, hrg)
hgb = render_gbuffer(hsc, hrg)
hdep = collect_deposits(hsc, hrg, spots=hsp, gbuffer=hgb)
hgt = render_shadow_masks(hsc, hrg, spots=hsp, gbuffer=hgb, deposits=hdep)
hcfg = GridConfig((32, 32, 32), hsc.room.lo, hsc.room.hi)
hgrid = carve_occupancy(DepthMap(hgb.depth, None), hgt, hrg, hsp, hcfg)
gt_occ = voxelize_scene(hsc, hcfg, include_walls=True)
iou_h = voxel_iou(hgrid, gt_occ)
sv = empty_soundness_violations(hgrid, hsc)
print(f"hidden32: iou={iou_h:.4f} soundness={sv} time={time.time()-t0:.1f}s")

# hidden box actually intersected?
hid_lo, hid_hi = np.array([2.85, 1.75, 0.001]), np.array([3.35, 2.25, 0.501])
centers_idx = np.argwhere(hgrid.cells == 2)
centers = hsc.room.lo + (centers_idx + 0.5) * hcfg.cell_size
in_hidden = np.all((centers >= hid_lo) & (centers <= hid_hi), axis=1)
print(f"occupied voxels inside hidden box: {int(in_hidden.sum())}")
