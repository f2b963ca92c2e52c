"""Command line driver for render, demux, reconstruct, eval, and export.

Subcommands
    render       scene spec (or a fresh seed) -> transient cube, ground
                 truth buffers, per-spot shadow masks, manifest
    dataset      N seeded scenes rendered into per-seed directories under a
                 top-level hash manifest
    demux        transient cube(s) + scene spec -> depth, per-spot ToF,
                 shadow masks, specular mask
    reconstruct  depth + shadow masks -> tri-state occupancy grid and novel
                 depth renders
    eval         predictions vs ground truth -> JSON metric report
    lif          depth + shadow masks -> light-in-flight frame sequence

Exit codes: 0 success, 2 argument or validation errors, 1 runtime failures.
Every artifact is deterministic: fixed inputs and seed give byte-identical
bytes regardless of the BOUNCELIDAR_THREADS worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as bio
from .carve import GridConfig, carve_occupancy, render_novel_depth, voxelize_scene
from .cube import CubeConfig
from .demux import (DepthMap, TofMapSet, demux_shadows, depth_from_multiplexed,
                    depth_from_scanned, detect_specular, two_bounce_tof)
from .metrics import depth_metrics, mask_metrics, reconstruction_metrics
from .renderer import (FAMILY_TWO_BOUNCE, FWHM_TO_SIGMA, ShadowMaskSet,
                       apply_sensor_model, collect_deposits,
                       render_gbuffer, render_light_in_flight,
                       render_shadow_masks, render_transient, trace_spots)
from .rig import CameraPose, look_at_rotation
from .scenegen import build_scene, generate_scene, scene_from_json, scene_to_json

THREADS_ENV = "BOUNCELIDAR_THREADS"
PAPER_PULSE_FWHM = 128e-12      # Gaussian stand-in for a measured sensor pulse
PAPER_JITTER_FWHM = 50e-12
PAPER_PEAK_RANGE = (10.0, 400.0)


def gaussian_pulse_kernel(fwhm, delta, truncate=4.0):
    """Normalized Gaussian pulse sampled at the bin spacing."""
    sigma_bins = fwhm * FWHM_TO_SIGMA / delta
    half = max(1, int(np.ceil(truncate * sigma_bins)))
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma_bins) ** 2)
    return k / k.sum()


def _cube_config(scene, args, oob_policy="error"):
    delta = args.delta_ps * 1e-12
    if args.bins:
        return CubeConfig(delta=delta, n_t=args.bins, oob_policy=oob_policy)
    # Longest representable path: one mirror interaction extends a
    # two-bounce route by at most one extra room crossing per leg.
    reach = 4.0 * scene.room.diagonal
    return CubeConfig(delta=delta, n_t=1,
                      oob_policy=oob_policy).sized_for(reach, margin=1.0)


def _noise_seed(seed, stream):
    return int(np.random.SeedSequence([int(seed), int(stream)])
               .generate_state(1, np.uint64)[0])


def _normalized_pgm(image):
    img = np.asarray(image, dtype=np.float64)
    peak = img.max()
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round(img / peak * 255.0).astype(np.uint8)


def _render_scene_to_dir(out_dir, spec, args, per_spot=False):
    """Render every artifact for one scene; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene, rig = build_scene(spec)
    cfg = _cube_config(scene, args)
    spots = trace_spots(scene, rig)
    gb = render_gbuffer(scene, rig)
    deposits = collect_deposits(scene, rig, spots=spots, gbuffer=gb)
    shadows = render_shadow_masks(scene, rig, deposits=deposits)
    cube = render_transient(scene, rig, cfg, deposits=deposits)

    kernel = None
    scale = 0.0
    if args.noise == "paper":
        kernel = gaussian_pulse_kernel(PAPER_PULSE_FWHM, cfg.delta)
        rng = np.random.default_rng(_noise_seed(args.seed, 0))
        scale = float(rng.uniform(*PAPER_PEAK_RANGE))
        two_bounce = render_transient(scene, rig, cfg,
                                      deposits=deposits.select(
                                          families=[FAMILY_TWO_BOUNCE]))
        ref = float(apply_sensor_model(two_bounce, kernel).data.max())
        cube = apply_sensor_model(cube, kernel, scale, PAPER_JITTER_FWHM,
                                  seed=_noise_seed(args.seed, 1),
                                  peak_reference=ref)

    paths = []

    def emit(name, writer, *payload):
        p = out / name
        writer(p, *payload)
        paths.append(p)

    emit("scene.json", lambda p, s: Path(p).write_text(s), scene_to_json(spec))
    emit("transients.sb3d", bio.write_transient, cube)
    emit("gt_depth.bin", bio.write_depth, gb.depth)
    emit("gt_specular.pgm", bio.write_pgm, gb.specular)
    emit("gt_intensity.pgm", bio.write_pgm, _normalized_pgm(gb.intensity))
    for i in range(shadows.n_spots):
        emit(f"shadow_{i:03d}.pgm", bio.write_pgm, shadows.masks[i])
    if per_spot:
        for i in range(spots.n_spots):
            spot_cube = render_transient(scene, rig, cfg,
                                         deposits=deposits.select(
                                             spot_indices=[i]))
            if args.noise == "paper":
                two_bounce = render_transient(
                    scene, rig, cfg,
                    deposits=deposits.select(spot_indices=[i],
                                             families=[FAMILY_TWO_BOUNCE]))
                ref = float(apply_sensor_model(two_bounce,
                                               kernel).data.max())
                spot_cube = apply_sensor_model(
                    spot_cube, kernel, scale, PAPER_JITTER_FWHM,
                    seed=_noise_seed(args.seed, 100 + i), peak_reference=ref)
            emit(f"spot_{i:03d}.sb3d", bio.write_transient, spot_cube)
    return paths


def _manifest_config(args, extra=None):
    cfg = {
        "seed": args.seed,
        "noise": args.noise,
        "bins": args.bins,
        "delta_ps": args.delta_ps,
        "res": args.res,
    }
    cfg.update(extra or {})
    return cfg


def _load_scene(path):
    return scene_from_json(Path(path).read_text())


def _generation_spec(args):
    if args.scene:
        for flag, name in ((args.no_mirror, "--no-mirror"),):
            if flag:
                raise ValueError(f"{name} only applies when generating from "
                                 f"--seed, not with --scene")
        return _load_scene(args.scene)
    _, _, spec = generate_scene(args.seed, n_x=args.res, n_y=args.res,
                                fov_deg=args.fov,
                                include_mirror=not args.no_mirror,
                                spot_grid=(args.spots, args.spots))
    return spec


def _cmd_render(args):
    spec = _generation_spec(args)
    paths = _render_scene_to_dir(args.out, spec, args, per_spot=args.per_spot)
    bio.write_manifest(Path(args.out) / "manifest.json", paths,
                       config=_manifest_config(args, {"per_spot": args.per_spot}))
    return 0


def _dataset_job(job):
    seed, out_dir, base = job
    args = argparse.Namespace(**base, seed=seed)
    _, _, spec = generate_scene(seed, n_x=args.res, n_y=args.res,
                                fov_deg=args.fov,
                                include_mirror=not args.no_mirror,
                                spot_grid=(args.spots, args.spots))
    return [str(p) for p in _render_scene_to_dir(out_dir, spec, args)]


def _cmd_dataset(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = {"noise": args.noise, "bins": args.bins, "delta_ps": args.delta_ps,
            "res": args.res, "fov": args.fov, "spots": args.spots,
            "no_mirror": args.no_mirror}
    jobs = [(args.seed + i, str(out / f"scene_{args.seed + i:05d}"), base)
            for i in range(args.n)]
    threads = max(1, int(os.environ.get(THREADS_ENV, "1")))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            produced = list(pool.map(_dataset_job, jobs))
    else:
        produced = [_dataset_job(j) for j in jobs]
    everything = [p for group in produced for p in group]
    bio.write_manifest(out / "manifest.json", everything,
                       config=_manifest_config(args, {"n": args.n}))
    return 0


def _stacked_masks(paths):
    return np.stack([bio.read_pgm(p) > 127 for p in paths])


def _cmd_demux(args):
    spec = _load_scene(args.scene)
    scene, rig = build_scene(spec)
    spots = trace_spots(scene, rig)
    cubes = [bio.read_transient(p) for p in args.cube]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.mode == "multiplexed":
        if len(cubes) != 1:
            raise ValueError("multiplexed mode expects exactly one cube")
        cube = cubes[0]
        depth = depth_from_multiplexed(cube, rig, spots,
                                       max_depth=scene.room.diagonal,
                                       min_amplitude=args.min_amplitude)
        tof = two_bounce_tof(depth, rig, spots)
        shadows = demux_shadows(cube, tof, min_amplitude=args.min_amplitude)
    else:
        depth = depth_from_scanned(cubes, rig, spots,
                                   min_amplitude=args.min_amplitude)
        tof = two_bounce_tof(depth, rig, spots)
        masks = np.ones((spots.n_spots, rig.camera.n_y, rig.camera.n_x),
                        dtype=bool)
        for i, spot_cube in enumerate(cubes):
            masks[i] = demux_shadows(spot_cube, TofMapSet(tof.tof[i:i + 1]),
                                     min_amplitude=args.min_amplitude).masks[0]
        shadows = ShadowMaskSet(masks)
        total = cubes[0].data.copy()
        for spot_cube in cubes[1:]:
            total += spot_cube.data
        cube = type(cubes[0])(total, cubes[0].delta, cubes[0].gate_path_min)
    specular = detect_specular(cube, depth, rig, spots)

    paths = []

    def emit(name, writer, *payload):
        p = out / name
        writer(p, *payload)
        paths.append(p)

    emit("depth.bin", bio.write_depth, depth.masked())
    emit("tof.npy", lambda p, a: np.save(p, a), tof.tof.astype(np.float32))
    emit("specular.pgm", bio.write_pgm, specular)
    for i in range(shadows.n_spots):
        emit(f"shadow_{i:03d}.pgm", bio.write_pgm, shadows.masks[i])
    bio.write_manifest(out / "manifest.json", paths,
                       config={"mode": args.mode,
                               "min_amplitude": args.min_amplitude})
    return 0


def _parse_pose(text, fov_deg, n_x, n_y):
    try:
        pos_part, target_part = text.split(":")
        pos = [float(x) for x in pos_part.split(",")]
        target = [float(x) for x in target_part.split(",")]
        if len(pos) != 3 or len(target) != 3:
            raise ValueError
    except ValueError:
        raise ValueError(f"pose {text!r} must be 'px,py,pz:tx,ty,tz'") from None
    forward = np.asarray(target) - np.asarray(pos)
    return CameraPose(pos, look_at_rotation(forward), fov_deg, n_x, n_y)


def _cmd_reconstruct(args):
    spec = _load_scene(args.scene)
    scene, rig = build_scene(spec)
    spots = trace_spots(scene, rig)
    depth = DepthMap(bio.read_depth(args.depth), None)
    shadows = ShadowMaskSet(_stacked_masks(args.shadows))
    grid_cfg = GridConfig((args.grid,) * 3, scene.room.lo, scene.room.hi)
    grid = carve_occupancy(depth, shadows, rig, spots, grid_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    paths = []
    bio.write_grid(out / "grid.bin", grid)
    paths += [out / "grid.bin", out / "grid.bin.json"]
    novel = render_novel_depth(grid, rig.camera)
    bio.write_depth(out / "novel_capture.bin", novel.masked())
    paths.append(out / "novel_capture.bin")
    for k, text in enumerate(args.novel_pose or []):
        pose = _parse_pose(text, rig.camera.fov_deg, rig.camera.n_x,
                           rig.camera.n_y)
        novel = render_novel_depth(grid, pose)
        name = f"novel_{k:03d}.bin"
        bio.write_depth(out / name, novel.masked())
        paths.append(out / name)
    bio.write_manifest(out / "manifest.json", paths,
                       config={"grid": args.grid})
    return 0


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return float(obj)


def _cmd_eval(args):
    report = {}
    if args.pred and args.gt:
        pred = DepthMap(bio.read_depth(args.pred), None)
        gt = DepthMap(bio.read_depth(args.gt), None)
        report["depth"] = depth_metrics(pred, gt)
    if args.pred_mask and args.gt_mask:
        report["mask"] = mask_metrics(bio.read_pgm(args.pred_mask) > 127,
                                      bio.read_pgm(args.gt_mask) > 127)
    if args.grid:
        if not args.scene:
            raise ValueError("--grid needs --scene for the reference "
                             "voxelization")
        grid = bio.read_grid(args.grid)
        scene, _ = build_scene(_load_scene(args.scene))
        gt_occupied = voxelize_scene(scene, grid.config())
        report["reconstruction"] = reconstruction_metrics(grid, gt_occupied)
    if not report:
        raise ValueError("nothing to evaluate: pass --pred/--gt, "
                         "--pred-mask/--gt-mask, or --grid with --scene")
    text = json.dumps(_plain(report), sort_keys=True, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def _cmd_lif(args):
    spec = _load_scene(args.scene)
    scene, rig = build_scene(spec)
    spots = trace_spots(scene, rig)
    depth = DepthMap(bio.read_depth(args.depth), None)
    shadows = ShadowMaskSet(_stacked_masks(args.shadows))
    tof = two_bounce_tof(depth, rig, spots)
    cfg = _cube_config(scene, args, oob_policy="drop")
    cubes = render_light_in_flight(tof, shadows, cfg)
    if args.spot is not None:
        if not 0 <= args.spot < len(cubes):
            raise ValueError(f"--spot {args.spot} outside 0..{len(cubes) - 1}")
        combined = cubes[args.spot]
    else:
        combined = cubes[0]
        for c in cubes[1:]:
            combined.data += c.data
    bio.write_frame_sequence(args.out, combined, prefix="lif")
    return 0


def _build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0,
                        help="generation / noise seed")
    shared.add_argument("--noise", choices=("off", "paper"), default="off",
                        help="sensor model: off, or pulse+Poisson+jitter")
    shared.add_argument("--bins", type=int, default=None,
                        help="histogram bins (default: sized to the scene)")
    shared.add_argument("--delta-ps", type=float, default=128.0,
                        help="bin duration in picoseconds")
    shared.add_argument("--res", type=int, default=64,
                        help="square image resolution for generated scenes")

    parser = argparse.ArgumentParser(
        prog="bouncelidar",
        description="Two-bounce lidar simulation and inversion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", parents=[shared],
                       help="render one scene to a directory of artifacts")
    p.add_argument("--out", required=True)
    p.add_argument("--scene", help="scene spec JSON (otherwise --seed generates)")
    p.add_argument("--fov", type=float, default=90.0)
    p.add_argument("--spots", type=int, default=5,
                   help="spot grid side length")
    p.add_argument("--no-mirror", action="store_true")
    p.add_argument("--per-spot", action="store_true",
                   help="also write one cube per spot (scanned captures)")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("dataset", parents=[shared],
                       help="render N seeded scenes with a hash manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--fov", type=float, default=90.0)
    p.add_argument("--spots", type=int, default=5)
    p.add_argument("--no-mirror", action="store_true")
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("demux", parents=[shared],
                       help="invert transient cubes to depth/ToF/shadows")
    p.add_argument("--scene", required=True)
    p.add_argument("--cube", nargs="+", required=True,
                   help="one multiplexed cube, or per-spot cubes in order")
    p.add_argument("--mode", choices=("scanned", "multiplexed"),
                   required=True)
    p.add_argument("--min-amplitude", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_demux)

    p = sub.add_parser("reconstruct", parents=[shared],
                       help="carve an occupancy grid from depth + shadows")
    p.add_argument("--scene", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--shadows", nargs="+", required=True,
                   help="per-spot shadow masks in spot order")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--novel-pose", action="append",
                   help="extra render pose 'px,py,pz:tx,ty,tz' (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("eval", parents=[shared],
                       help="metric report comparing predictions to truth")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--pred-mask")
    p.add_argument("--gt-mask")
    p.add_argument("--grid")
    p.add_argument("--scene")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("lif", parents=[shared],
                       help="light-in-flight frames from depth + shadows")
    p.add_argument("--scene", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--shadows", nargs="+", required=True)
    p.add_argument("--spot", type=int, default=None,
                   help="export a single spot instead of the sum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lif)
    return parser


def cli_dispatch(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
