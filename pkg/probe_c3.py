import time

import numpy as np

from bouncelidar import (CubeConfig, collect_deposits, demux_shadows,
                         depth_from_multiplexed, generate_scene,
                         render_gbuffer, render_shadow_masks,
                         render_transient, separation_mask, spot_image_paths,
                         trace_spots, two_bounce_tof, unmix_shadows)


def iou(a, b):
    inter = (a & b).sum(axis=(1, 2))
    union = (a | b).sum(axis=(1, 2))
    return (inter / np.maximum(union, 1)).mean()


rows = []
for seed in range(8):
    scene, rig, spec = generate_scene(seed, include_mirror=False)
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
    cfg = CubeConfig(delta=128e-12, n_t=1).sized_for(4.0 * scene.room.diagonal,
                                                     margin=1.0)
    cube = render_transient(scene, rig, cfg, deposits=deposits)
    gtmask = render_shadow_masks(scene, rig, deposits=deposits)
    imgp = spot_image_paths(scene, rig, spots=spots, gbuffer=gb)

    dm = depth_from_multiplexed(cube, rig, spots, max_depth=scene.room.diagonal)
    diffuse = ~gb.specular
    v = dm.valid & diffuse
    err = np.abs(dm.values - gb.depth)[v]
    mae = err.mean()
    within = (err <= 2.0 * cube.bin_width).mean()

    tof = two_bounce_tof(gb.depth, rig, spots)
    w_iou = iou(demux_shadows(cube, tof).masks, gtmask.masks)

    t0 = time.perf_counter()
    umask = unmix_shadows(cube, tof, image_paths=imgp)
    t_unmix = time.perf_counter() - t0
    u_iou = iou(umask.masks, gtmask.masks)
    u_fp = (umask.masks & ~gtmask.masks).sum()
    u_fn = (~umask.masks & gtmask.masks).sum()

    sep = separation_mask(tof, cube, extra_paths=imgp)
    sep &= ~np.isfinite(imgp)
    neq_w = ((demux_shadows(cube, tof).masks != gtmask.masks) & sep).sum()
    neq_u = ((umask.masks != gtmask.masks) & sep).sum()

    print(f"seed {seed}: muxMAE {mae:.4f} within2 {within:.3f} | "
          f"IoU win {w_iou:.4f} unmix {u_iou:.4f} (FP {u_fp} FN {u_fn}, "
          f"{t_unmix:.2f}s) | filteredNeq win {neq_w} unmix {neq_u} "
          f"sep {sep.mean():.3f}")
    rows.append((mae, within, w_iou, u_iou))

rows = np.array(rows)
print("means:", " ".join(f"{x:.4f}" for x in rows.mean(axis=0)))
