"""Deterministic two-bounce lidar simulation and analytic inversion.

The package simulates a pulsed single-photon lidar whose steered laser
spots indirectly light a room, producing per-pixel transient histograms,
and inverts those measurements in closed form: depth from ellipsoid
time-of-flight constraints, per-spot shadow demultiplexing, specular
detection, and occlusion-aware voxel carving.
"""

from .geometry import (C_LIGHT, Box, Cylinder, DegenerateGeometryError,
                       Diffuse, GeometryError, Hit, InvalidSegmentError,
                       Mirror, NoSolutionError, Panel, Ray, Room, Scene,
                       Sphere, ellipsoid_depth, ellipsoid_depth_many,
                       intersect_ray, intersect_rays, segments_clear, unit,
                       visible)
from .rig import CameraPose, LidarRig, look_at_rotation, spot_grid_dirs
from .cube import (CubeConfig, GateError, TransientCube, accumulate_paths,
                   empty_cube)
from .renderer import (ALL_FAMILIES, FAMILY_MIRROR, FAMILY_SPOT_IMAGE,
                       FAMILY_TWO_BOUNCE, Deposits, GBuffer,
                       RendererIntegrityError, ShadowMaskSet, SpotSet,
                       apply_sensor_model, collect_deposits, render_calibrated,
                       render_gbuffer, render_light_in_flight,
                       render_shadow_masks, render_transient,
                       spot_image_paths, trace_spots)
from .demux import (AnchorError, DepthMap, GeometryMismatchError, PeakList,
                    SpecularConfig, TofMapSet, demux_shadows,
                    depth_from_multiplexed, depth_from_scanned,
                    detect_specular, extract_peaks, noisy_min_amplitude,
                    rescale_with_anchors, separation_mask, shadow_transient,
                    two_bounce_tof, unmix_amplitudes, unmix_shadows)
from .carve import (EMPTY, OCCUPIED, UNKNOWN, CarveInputError, GridConfig,
                    OccupancyGrid, carve_occupancy,
                    empty_soundness_violations, mark_segments,
                    render_novel_depth, voxel_iou, voxelize_scene)
from .metrics import (MetricConfig, boundary_f1, depth_metrics,
                      loss_diagnostics, mask_metrics, reconstruction_metrics,
                      ssim)
from .io import (BadMagicError, FileFormatError, TruncatedFileError,
                 VersionMismatchError, read_depth, read_grid, read_pgm,
                 read_transient, sha256_of, verify_manifest,
                 write_depth, write_frame_sequence, write_grid,
                 write_manifest, write_pgm, write_transient)
from .scenegen import (SceneGenError, SceneSpecError, build_scene,
                       empty_room_scene, generate_scene, hidden_cube_scene,
                       scene_from_json, scene_to_json, validate_spec)

__version__ = "0.1.0"

__all__ = [
    "C_LIGHT", "Box", "Cylinder", "DegenerateGeometryError", "Diffuse",
    "GeometryError", "Hit", "InvalidSegmentError", "Mirror",
    "NoSolutionError", "Panel", "Ray", "Room", "Scene", "Sphere",
    "ellipsoid_depth", "ellipsoid_depth_many", "intersect_ray",
    "intersect_rays", "segments_clear", "unit", "visible",
    "CameraPose", "LidarRig", "look_at_rotation", "spot_grid_dirs",
    "CubeConfig", "GateError", "TransientCube", "accumulate_paths",
    "empty_cube",
    "ALL_FAMILIES", "FAMILY_MIRROR", "FAMILY_SPOT_IMAGE",
    "FAMILY_TWO_BOUNCE", "Deposits", "GBuffer", "RendererIntegrityError",
    "ShadowMaskSet", "SpotSet", "apply_sensor_model", "collect_deposits",
    "render_calibrated", "render_gbuffer", "render_light_in_flight",
    "render_shadow_masks", "render_transient", "spot_image_paths",
    "trace_spots",
    "AnchorError", "DepthMap", "GeometryMismatchError", "PeakList",
    "SpecularConfig", "TofMapSet", "demux_shadows", "depth_from_multiplexed",
    "depth_from_scanned", "detect_specular", "extract_peaks",
    "noisy_min_amplitude", "rescale_with_anchors", "separation_mask",
    "shadow_transient", "two_bounce_tof", "unmix_amplitudes",
    "unmix_shadows",
    "EMPTY", "OCCUPIED", "UNKNOWN", "CarveInputError", "GridConfig",
    "OccupancyGrid", "carve_occupancy", "empty_soundness_violations",
    "mark_segments", "render_novel_depth", "voxel_iou", "voxelize_scene",
    "MetricConfig", "boundary_f1", "depth_metrics", "loss_diagnostics",
    "mask_metrics", "reconstruction_metrics", "ssim",
    "BadMagicError", "FileFormatError", "TruncatedFileError",
    "VersionMismatchError", "read_depth", "read_grid", "read_pgm",
    "read_transient", "sha256_of", "verify_manifest", "write_depth",
    "write_frame_sequence", "write_grid", "write_manifest", "write_pgm",
    "write_transient",
    "SceneGenError", "SceneSpecError", "build_scene", "empty_room_scene",
    "generate_scene", "hidden_cube_scene", "scene_from_json",
    "scene_to_json", "validate_spec",
    "__version__",
]
