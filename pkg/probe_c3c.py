import numpy as np

from bouncelidar import (CubeConfig, collect_deposits, generate_scene,
                         render_gbuffer, render_shadow_masks,
                         render_transient, spot_image_paths, trace_spots,
                         two_bounce_tof)
from bouncelidar.demux import unmix_amplitudes
from bouncelidar.renderer import FAMILY_SPOT_IMAGE, FAMILY_TWO_BOUNCE

for seed in (2, 6):
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

    n = spots.n_spots
    n_pix = gb.depth.size
    w_true = np.zeros((n, n_pix))
    tb = deposits.family == FAMILY_TWO_BOUNCE
    w_true[deposits.spot[tb],
           deposits.v[tb] * gb.depth.shape[1] + deposits.u[tb]] = \
        deposits.weight[tb]

    amps = unmix_amplitudes(cube, tof, extra_paths=imgp)[:n].reshape(n, -1)
    rec = np.nan_to_num(amps)
    err = rec - w_true

    lit = w_true >= 1e-6
    fn = lit & (rec < 1e-6)
    fp = ~lit & (rec >= 1e-6) & (w_true == 0)
    print(f"seed {seed}: |err| mean {np.abs(err).mean():.2e} "
          f"p99 {np.percentile(np.abs(err), 99):.2e} "
          f"max {np.abs(err).max():.2e}")
    print(f"  FN {fn.sum()} (true w of FN: "
          f"med {np.median(w_true[fn]) if fn.any() else 0:.2e} "
          f"p90 {np.percentile(w_true[fn], 90) if fn.any() else 0:.2e}) "
          f"rec at FN med {np.median(rec[fn]) if fn.any() else 0:.2e}")
    print(f"  FP {fp.sum()} (rec at FP med "
          f"{np.median(rec[fp]) if fp.any() else 0:.2e} "
          f"p90 {np.percentile(rec[fp], 90) if fp.any() else 0:.2e})")
    # how much error comes from crowded pixels?
    bad = np.abs(err) > 5e-7
    per_pix = bad.sum(axis=0)
    print(f"  entries |err|>5e-7: {bad.sum()}  pixels affected: "
          f"{(per_pix > 0).sum()}  max per pixel {per_pix.max()}")
    # prediction crowding at bad pixels vs all
    paths = np.concatenate([tof.tof * 299792458.0, imgp]).reshape(-1, n_pix)
    pos = (paths - cube.gate_path_min) / cube.bin_width
    dens = []
    for p in np.flatnonzero(per_pix > 0)[:200]:
        q = np.sort(pos[np.isfinite(pos[:, p]), p])
        dens.append(np.diff(q).min() if q.size > 1 else np.inf)
    if dens:
        dens = np.array(dens)
        print(f"  min adjacent prediction gap at bad pixels: "
              f"med {np.median(dens):.3f} bins, p90 {np.percentile(dens, 10):.4f}")
