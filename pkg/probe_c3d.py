import numpy as np

from bouncelidar import (CubeConfig, collect_deposits, generate_scene,
                         render_gbuffer, render_shadow_masks,
                         render_transient, spot_image_paths, trace_spots,
                         two_bounce_tof, unmix_shadows)

for seed in (3, 6):
    scene, rig, spec = generate_scene(seed, include_mirror=False)
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
    cfg = CubeConfig(delta=128e-12, n_t=1).sized_for(4.0 * scene.room.diagonal,
                                                     margin=1.0)
    cube = render_transient(scene, rig, cfg, deposits=deposits)
    gtmask = render_shadow_masks(scene, rig, deposits=deposits)
    imgp = spot_image_paths(scene, rig, spots=spots, gbuffer=gb)
    tof = two_bounce_tof(gb.depth, rig, spots)
    um = unmix_shadows(cube, tof, image_paths=imgp)

    inter = (um.masks & gtmask.masks).sum(axis=(1, 2))
    union = (um.masks | gtmask.masks).sum(axis=(1, 2))
    fp = (um.masks & ~gtmask.masks).sum(axis=(1, 2))
    per = inter / union
    pooled = inter.sum() / union.sum()
    print(f"seed {seed}: per-spot mean {per.mean():.4f} pooled {pooled:.4f}")
    order = np.argsort(per)
    for i in order[:6]:
        print(f"  spot {i:2d}: IoU {per[i]:.3f} union {union[i]:5d} "
              f"gtlit {gtmask.masks[i].sum():5d} FP {fp[i]:4d} "
              f"leg {spots.laser_leg[i]:.2f}")
