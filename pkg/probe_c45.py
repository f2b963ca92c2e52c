import numpy as np

from bouncelidar import (CubeConfig, collect_deposits, depth_from_multiplexed,
                         detect_specular, generate_scene, render_gbuffer,
                         render_transient, trace_spots)
from bouncelidar.renderer import FAMILY_MIRROR


def run(seed, include_mirror):
    scene, rig, _ = generate_scene(seed, include_mirror=include_mirror)
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
    cfg = CubeConfig(delta=128e-12, n_t=1).sized_for(4.0 * scene.room.diagonal,
                                                     margin=1.0)
    cube = render_transient(scene, rig, cfg, deposits=deposits)
    depth = depth_from_multiplexed(cube, rig, spots,
                                   max_depth=scene.room.diagonal)
    est = detect_specular(cube, depth, rig, spots)
    return scene, rig, gb, deposits, est


ious, bad, tot = [], 0, 0
for seed in range(20):
    scene, rig, gb, deposits, est = run(seed, True)
    gt = gb.specular
    inter, union = (est & gt).sum(), (est | gt).sum()
    ious.append(inter / max(union, 1))
    fp, fn = (est & ~gt).sum(), (~est & gt).sum()

    at_spec = gt[deposits.v, deposits.u]
    assert (deposits.family[at_spec] == FAMILY_MIRROR).all()
    d1 = np.linalg.norm(gb.points - rig.laser_pos, axis=-1) + gb.depth
    lim = d1[deposits.v, deposits.u]
    tot += at_spec.sum()
    bad += (deposits.path[at_spec] <= lim[at_spec]).sum()
    print(f"seed {seed}: IoU {ious[-1]:.4f} FP {fp} FN {fn} gt {gt.sum()}")

fp_diffuse = 0
for seed in range(20, 30):
    _, _, gb, _, est = run(seed, False)
    assert not gb.specular.any()
    fp_diffuse += est.sum()

print(f"mean IoU {np.mean(ious):.4f} min {np.min(ious):.4f} | "
      f"ordering bad {bad} of {tot} | diffuse FP {fp_diffuse}")
