import numpy as np

from bouncelidar import (CubeConfig, collect_deposits, demux_shadows,
                         hidden_cube_scene, render_gbuffer,
                         render_shadow_masks, render_transient, trace_spots,
                         spot_image_paths, two_bounce_tof, unmix_shadows)
from bouncelidar.carve import (GridConfig, carve_occupancy,
                               empty_soundness_violations, voxel_iou,
                               voxelize_scene)
from bouncelidar.demux import DepthMap

scene, rig, spec = hidden_cube_scene()
spots = trace_spots(scene, rig)
gb = render_gbuffer(scene, rig)
deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
cfg = CubeConfig(delta=128e-12, n_t=1).sized_for(4.0 * scene.room.diagonal,
                                                 margin=1.0)
cube = render_transient(scene, rig, cfg, deposits=deposits)
gtmask = render_shadow_masks(scene, rig, deposits=deposits)
depth = DepthMap(gb.depth, np.isfinite(gb.depth))
grid_cfg = GridConfig((64, 64, 64), scene.room.lo, scene.room.hi)
gt_occ = voxelize_scene(scene, grid_cfg)

tof = two_bounce_tof(gb.depth, rig, spots)
imgp = spot_image_paths(scene, rig, spots=spots, gbuffer=gb)
umask = unmix_shadows(cube, tof, image_paths=imgp,
                      specular_mask=gb.specular)
wmask = demux_shadows(cube, tof)

for name, masks in (("gt", gtmask), ("unmix", umask), ("window", wmask)):
    grid = carve_occupancy(depth, masks, rig, spots, grid_cfg)
    iou = voxel_iou(grid, gt_occ)
    viol = empty_soundness_violations(grid, scene)
    m_iou = ((masks.masks & gtmask.masks).sum()
             / max((masks.masks | gtmask.masks).sum(), 1))
    print(f"{name:6s}: voxel IoU {iou:.4f} soundness violations {viol} "
          f"mask IoU {m_iou:.4f}")
