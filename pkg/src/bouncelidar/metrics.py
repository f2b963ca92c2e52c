"""Depth, mask, and reconstruction quality metrics.

Self-contained definitions so reported numbers do not drift with library
versions: SSIM uses a uniform window with the standard stabilizers, depth
boundaries come from relative forward differences, and boundary F1 matches
edge pixels within a pixel tolerance through a distance transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .carve import voxel_iou
from .demux import DepthMap


@dataclass
class MetricConfig:
    alpha: float = 0.15             # SSIM weight in the data term
    beta: float = 1e-3              # smoothness weight
    ssim_window: int = 7
    edge_threshold: float = 0.05    # relative depth gradient marking an edge
    boundary_tolerance: float = 1.0  # pixels


def _unpack(depth):
    if isinstance(depth, DepthMap):
        return depth.values, depth.valid
    d = np.asarray(depth, dtype=np.float64)
    return d, np.isfinite(d)


def ssim(a, b, data_range, window=7, k1=0.01, k2=0.03):
    """Mean SSIM over uniform windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("SSIM inputs must share a shape")
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mean = lambda x: ndimage.uniform_filter(x, size=window, mode="reflect")
    mu_a = mean(a)
    mu_b = mean(b)
    var_a = mean(a * a) - mu_a * mu_a
    var_b = mean(b * b) - mu_b * mu_b
    cov = mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _edges(depth, threshold):
    """Relative forward-difference depth discontinuities."""
    d = depth
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    gx[:, :-1] = np.abs(d[:, 1:] - d[:, :-1])
    gy[:-1, :] = np.abs(d[1:, :] - d[:-1, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.maximum(gx, gy) / np.abs(d)
    return np.nan_to_num(rel) > threshold


def boundary_f1(pred, gt, threshold, tolerance):
    """F1 of depth-edge pixels matched within a pixel distance tolerance."""
    pe = _edges(pred, threshold)
    ge = _edges(gt, threshold)
    if not pe.any() and not ge.any():
        return 1.0
    if not pe.any() or not ge.any():
        return 0.0
    dist_to_gt = ndimage.distance_transform_edt(~ge)
    dist_to_pred = ndimage.distance_transform_edt(~pe)
    precision = float(np.mean(dist_to_gt[pe] <= tolerance))
    recall = float(np.mean(dist_to_pred[ge] <= tolerance))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def depth_metrics(pred, gt, cfg=None):
    """MAE over mutually valid pixels plus boundary F1.

    Raises ValueError when the two maps share no valid pixel.
    """
    cfg = cfg or MetricConfig()
    p, pv = _unpack(pred)
    g, gv = _unpack(gt)
    if p.shape != g.shape:
        raise ValueError("depth maps disagree on shape")
    both = pv & gv
    if not both.any():
        raise ValueError("no mutually valid pixels to compare")
    mae = float(np.mean(np.abs(p[both] - g[both])))
    f1 = boundary_f1(np.where(pv, p, 0.0), np.where(gv, g, 0.0),
                     cfg.edge_threshold, cfg.boundary_tolerance)
    return {"mae": mae, "boundary_f1": f1, "valid_fraction":
            float(both.mean())}


def mask_metrics(pred, gt):
    """Pixelwise MAE and IoU of two binary masks; empty union counts as 1."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError("masks disagree on shape")
    mae = float(np.mean(pred != gt))
    union = np.logical_or(pred, gt).sum()
    iou = 1.0 if union == 0 else float(np.logical_and(pred, gt).sum() / union)
    return {"pixel_mae": mae, "iou": iou}


def loss_diagnostics(pred, gt, intensity, cfg=None):
    """Data and smoothness terms of the usual depth training objective.

    l_data = alpha * (1 - SSIM(gt, pred)) + (1 - alpha) * mean |gt - pred|.
    l_smooth is the mean edge-aware forward-difference penalty, each axis
    averaged over its defined differences:

        beta * (mean_x |dx pred| exp(-|dx I|) + mean_y |dy pred| exp(-|dy I|))

    so a uniform-intensity ramp of slope s per pixel scores beta * |s|.
    """
    cfg = cfg or MetricConfig()
    p, _ = _unpack(pred)
    g, _ = _unpack(gt)
    if p.shape != g.shape or p.shape != np.asarray(intensity).shape:
        raise ValueError("inputs disagree on shape")
    rng = float(np.max(g)) if np.max(g) > 0 else 1.0
    s = ssim(g, p, data_range=rng, window=cfg.ssim_window)
    l1 = float(np.mean(np.abs(g - p)))
    l_data = cfg.alpha * (1.0 - s) + (1.0 - cfg.alpha) * l1

    inten = np.asarray(intensity, dtype=np.float64)
    dx_p = np.abs(p[:, 1:] - p[:, :-1])
    dy_p = np.abs(p[1:, :] - p[:-1, :])
    dx_i = np.abs(inten[:, 1:] - inten[:, :-1])
    dy_i = np.abs(inten[1:, :] - inten[:-1, :])
    l_smooth = cfg.beta * (float(np.mean(dx_p * np.exp(-dx_i)))
                           + float(np.mean(dy_p * np.exp(-dy_i))))
    return {"l_data": l_data, "l_smooth": l_smooth, "ssim": s, "l1": l1}


def reconstruction_metrics(grid, gt_occupied, novel_pairs=(), cfg=None):
    """Voxel IoU plus averaged depth metrics over novel-view pairs.

    novel_pairs is a sequence of (predicted, ground truth) depth maps.
    """
    cfg = cfg or MetricConfig()
    report = {"voxel_iou": voxel_iou(grid, gt_occupied)}
    if novel_pairs:
        maes = []
        f1s = []
        for pred, gt in novel_pairs:
            m = depth_metrics(pred, gt, cfg)
            maes.append(m["mae"])
            f1s.append(m["boundary_f1"])
        report["novel_depth_mae"] = float(np.mean(maes))
        report["novel_boundary_f1"] = float(np.mean(f1s))
    return report
