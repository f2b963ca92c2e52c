"""Dev probe round 3: re-check separation fix and novel-depth identity rig."""
import copy

import numpy as np

from bouncelidar import (
    CameraPose,
    CubeConfig,
    DepthMap,
    GridConfig,
    LidarRig,
    ShadowMaskSet,
    build_scene,
    carve_occupancy,
    collect_deposits,
    demux_shadows,
    empty_room_scene,
    look_at_rotation,
    render_gbuffer,
    render_novel_depth,
    render_shadow_masks,
    render_transient,
    separation_mask,
    spot_grid_dirs,
    spot_image_paths,
    trace_spots,
    two_bounce_tof,
)


def cfg_for(scene, delta=128e-12, policy="error"):
    reach = 4.0 * scene.room.diagonal
    return CubeConfig(delta=delta, n_t=1, gate_path_min=1.0,
                      oob_policy=policy).sized_for(reach, margin=1.0)


# ---- box24 filtered equality after separation_mask fix
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
mism = int(np.sum(dm3.masks[sep3] != gt3.masks[sep3]))
print(f"box24 after fix: filtered mismatches={mism} sep_frac={float(np.mean(sep3)):.3f}")

# ---- novel depth identity, non-grazing rig, unknown='empty'
spec_e = empty_room_scene(24, 24, spot_grid=(2, 2))[2]
room_lo = np.array(spec_e["room"]["lo"])
room_hi = np.array(spec_e["room"]["hi"])
cam = CameraPose(position=np.array([1.0, 2.0, 1.5]),
                 rotation=look_at_rotation(np.array([1.0, 0.0, 0.0])),
                 fov_deg=60.0, n_x=24, n_y=24)
scene_e, _, _ = empty_room_scene(24, 24, spot_grid=(2, 2))
dirs = spot_grid_dirs(cam, 2, 2, span=0.5)
rig_e = LidarRig(cam, np.array([1.0, 2.06, 1.47]), dirs)
sp_e = trace_spots(scene_e, rig_e)
gb_e = render_gbuffer(scene_e, rig_e)
ones = ShadowMaskSet(np.ones((rig_e.n_spots, 24, 24), dtype=bool))
gcfg = GridConfig((32, 32, 32), room_lo, room_hi)
grid = carve_occupancy(DepthMap(gb_e.depth, None), ones, rig_e, sp_e, gcfg)
diag = float(np.linalg.norm(gcfg.cell_size))
for policy in ("occupied", "empty"):
    nd = render_novel_depth(grid, cam, unknown=policy)
    both = nd.valid & np.isfinite(gb_e.depth)
    err = np.abs(nd.values[both] - gb_e.depth[both])
    print(f"novel60[{policy}]: validfrac={float(np.mean(nd.valid)):.3f} "
          f"maxerr={err.max():.4f} over_diag={int(np.sum(err > diag))}/{err.size} "
          f"(diag={diag:.3f})")
