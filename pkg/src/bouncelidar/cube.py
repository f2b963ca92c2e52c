"""Transient cube data model and path-to-bin accounting.

A transient cube stores per-pixel time histograms as float32 with shape
(n_y, n_x, n_t). Bins are indexed by optical path length: bin k covers
[gate_path_min + k * bin_width, gate_path_min + (k + 1) * bin_width) meters,
where bin_width = C_LIGHT * delta for a bin duration of delta seconds.

Deposits are spread over the two bins nearest the continuous bin-center
coordinate, preserving total energy. Paths outside the gate either raise
GateError or are dropped, per the accumulation policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import C_LIGHT


# smallest histogram mass treated as a detectable signal by both the
# ground-truth lighting masks and the demultiplexer (noiseless data)
DEFAULT_MIN_AMPLITUDE = 1e-6


class GateError(ValueError):
    """A deposit path fell outside the configured gate."""


@dataclass
class CubeConfig:
    delta: float = 128e-12          # bin duration, seconds
    n_t: int = 637
    gate_path_min: float = 1.0      # path length at the start of bin 0, meters
    oob_policy: str = "error"       # "error" or "drop"

    def __post_init__(self):
        if self.delta <= 0 or self.n_t < 1 or self.gate_path_min < 0:
            raise ValueError("invalid cube configuration")
        if self.oob_policy not in ("error", "drop"):
            raise ValueError(f"unknown out-of-gate policy {self.oob_policy!r}")

    @property
    def bin_width(self):
        return C_LIGHT * self.delta

    @property
    def gate_path_max(self):
        return self.gate_path_min + self.n_t * self.bin_width

    def sized_for(self, max_path, margin=0.5):
        """Copy with n_t grown to cover paths up to max_path + margin."""
        need = int(np.ceil((max_path + margin - self.gate_path_min) / self.bin_width))
        return CubeConfig(self.delta, max(self.n_t, need), self.gate_path_min,
                          self.oob_policy)


@dataclass
class TransientCube:
    data: np.ndarray                # (n_y, n_x, n_t) float32
    delta: float
    gate_path_min: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError("cube data must be (n_y, n_x, n_t)")

    @property
    def n_y(self):
        return self.data.shape[0]

    @property
    def n_x(self):
        return self.data.shape[1]

    @property
    def n_t(self):
        return self.data.shape[2]

    @property
    def bin_width(self):
        return C_LIGHT * self.delta

    def config(self, oob_policy="error"):
        return CubeConfig(self.delta, self.n_t, self.gate_path_min, oob_policy)

    def bin_of_path(self, path):
        """Bin whose interval contains the given path length."""
        return np.floor((np.asarray(path) - self.gate_path_min)
                        / self.bin_width).astype(np.int64)

    def bin_of_time(self, t):
        return self.bin_of_path(np.asarray(t) * C_LIGHT)

    def path_of_bin_center(self, k):
        return self.gate_path_min + (np.asarray(k) + 0.5) * self.bin_width

    def same_geometry(self, other):
        return (self.data.shape == other.data.shape
                and self.delta == other.delta
                and self.gate_path_min == other.gate_path_min)

    def intensity(self):
        """Time-integrated image, float64 (n_y, n_x)."""
        return self.data.sum(axis=2, dtype=np.float64)


def empty_cube(n_y, n_x, cfg):
    return TransientCube(np.zeros((n_y, n_x, cfg.n_t), dtype=np.float32),
                         cfg.delta, cfg.gate_path_min)


def accumulate_paths(data, v_idx, u_idx, paths, weights, cfg):
    """Deposit weighted path samples into a cube array in argument order.

    Each deposit splits between the two bins nearest its continuous
    bin-center coordinate. In-gate mass that would spill past the first or
    last bin center is clamped into the boundary bin, so total in-gate
    energy is preserved exactly.
    """
    paths = np.asarray(paths, dtype=np.float64)
    if paths.size == 0:
        return
    oob = (paths < cfg.gate_path_min) | (paths >= cfg.gate_path_max)
    if oob.any():
        if cfg.oob_policy == "error":
            bad = float(paths[oob][0])
            raise GateError(
                f"path {bad:.4f} m outside gate "
                f"[{cfg.gate_path_min:.4f}, {cfg.gate_path_max:.4f}) m")
        keep = ~oob
        v_idx, u_idx, paths, weights = (a[keep] for a in
                                        (v_idx, u_idx, paths, weights))
        if paths.size == 0:
            return
    g = (paths - cfg.gate_path_min) / cfg.bin_width - 0.5
    k0 = np.floor(g).astype(np.int64)
    w_hi = (g - k0).astype(np.float32)
    weights = np.asarray(weights, dtype=np.float32)
    k1 = k0 + 1
    # clamp boundary spill into the edge bins
    low = k0 < 0
    k0[low] = 0
    w_hi[low] = 0.0
    high = k1 > cfg.n_t - 1
    k1[high] = cfg.n_t - 1
    w_hi[high] = 1.0
    np.add.at(data, (v_idx, u_idx, k0), weights * (1.0 - w_hi))
    np.add.at(data, (v_idx, u_idx, k1), weights * w_hi)
