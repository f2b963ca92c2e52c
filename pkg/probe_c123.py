import time

import numpy as np

from bouncelidar import (CubeConfig, accumulate_paths, collect_deposits,
                         demux_shadows, depth_from_multiplexed,
                         depth_from_scanned, empty_cube, generate_scene,
                         render_gbuffer, render_shadow_masks,
                         render_transient, separation_mask, spot_image_paths,
                         trace_spots, two_bounce_tof, unmix_shadows)

t_all = 0.0
mae_scan, mae_mux, within2 = [], [], []
neq_filtered, n_filtered = 0, 0
iou_unfiltered = []

for seed in range(50):
    t0 = time.perf_counter()
    scene, rig, spec = generate_scene(seed, include_mirror=False)
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
    cfg = CubeConfig(delta=128e-12, n_t=1).sized_for(4.0 * scene.room.diagonal,
                                                     margin=1.0)
    cubes = [render_transient(scene, rig, cfg,
                              deposits=deposits.select(spot_indices=[i]))
             for i in range(rig.n_spots)]
    d_scan = depth_from_scanned(cubes, rig, spots)
    t_all += time.perf_counter() - t0

    v = d_scan.valid & np.isfinite(gb.depth)
    mae_scan.append(np.abs(d_scan.values - gb.depth)[v].mean())

    # criterion 2: multiplexed voting on the same scene
    cube = render_transient(scene, rig, cfg, deposits=deposits)
    d_mux = depth_from_multiplexed(cube, rig, spots,
                                   max_depth=scene.room.diagonal)
    v = d_mux.valid
    err = np.abs(d_mux.values - gb.depth)[v]
    mae_mux.append(err.mean())
    within2.append((err <= 2.0 * cube.bin_width).mean())

    # criterion 3: filtered exact equality + unfiltered IoU
    gtmask = render_shadow_masks(scene, rig, deposits=deposits)
    imgp = spot_image_paths(scene, rig, spots=spots, gbuffer=gb)
    tof = two_bounce_tof(gb.depth, rig, spots)
    umask = unmix_shadows(cube, tof, image_paths=imgp)
    sep = separation_mask(tof, cube, extra_paths=imgp)
    sep &= ~np.isfinite(imgp)
    neq_filtered += int(((umask.masks != gtmask.masks) & sep).sum())
    n_filtered += int(sep.sum())
    inter = (umask.masks & gtmask.masks).sum(axis=(1, 2))
    union = (umask.masks | gtmask.masks).sum(axis=(1, 2))
    iou_unfiltered.append((inter / np.maximum(union, 1)).mean())

print(f"criterion 1: scanned MAE mean {np.mean(mae_scan):.4f} "
      f"max {np.max(mae_scan):.4f} | pipeline time {t_all:.1f}s")
print(f"criterion 2: mux MAE mean {np.mean(mae_mux):.4f} "
      f"max {np.max(mae_mux):.4f} | within2 mean {np.mean(within2):.4f} "
      f"min {np.min(within2):.4f}")
print(f"criterion 3: filtered mismatches {neq_filtered} of {n_filtered} | "
      f"unfiltered IoU mean {np.mean(iou_unfiltered):.4f} "
      f"min {np.min(iou_unfiltered):.4f}")
