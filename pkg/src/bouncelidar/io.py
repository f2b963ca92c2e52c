"""Binary artifact formats and manifest hashing.

Transient cubes, depth maps, and occupancy grids share a little-endian
header scheme: an 8-byte magic, a u32 format version, u32 dimensions, f64
metadata, then a flat payload in C order. Masks are binary PGM (0 or 255),
light-in-flight frames are 8-bit PGM sequences normalized per frame with a
JSON sidecar recording the scale factors. All writers are deterministic:
identical inputs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .cube import TransientCube

TRANSIENT_MAGIC = b"SB3DTRNS"
DEPTH_MAGIC = b"SB3DDPTH"
GRID_MAGIC = b"SB3DGRID"
FORMAT_VERSION = 1


class FileFormatError(ValueError):
    """Base class for artifact parsing failures."""


class BadMagicError(FileFormatError):
    pass


class VersionMismatchError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated while reading {what}")
    return buf


def _check_header(fh, magic):
    got = _read_exact(fh, 8, "magic")
    if got != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {got!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported format version {version}")


def write_transient(path, cube):
    data = np.ascontiguousarray(cube.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TRANSIENT_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, cube.n_x, cube.n_y,
                             cube.n_t))
        fh.write(struct.pack("<dd", cube.delta * 1e12, cube.gate_path_min))
        fh.write(data.tobytes())


def read_transient(path):
    with open(path, "rb") as fh:
        _check_header(fh, TRANSIENT_MAGIC)
        n_x, n_y, n_t = struct.unpack("<III", _read_exact(fh, 12, "dimensions"))
        delta_ps, gate = struct.unpack("<dd", _read_exact(fh, 16, "metadata"))
        payload = _read_exact(fh, 4 * n_x * n_y * n_t, "payload")
        if fh.read(1):
            raise FileFormatError("trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_y, n_x, n_t)
    return TransientCube(data.copy(), delta_ps / 1e12, gate)


def write_depth(path, depth_values):
    """Depth image as f32, NaN marking invalid pixels."""
    data = np.ascontiguousarray(depth_values, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("depth payload must be 2-D")
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, data.shape[1],
                             data.shape[0]))
        fh.write(data.tobytes())


def read_depth(path):
    with open(path, "rb") as fh:
        _check_header(fh, DEPTH_MAGIC)
        n_x, n_y = struct.unpack("<II", _read_exact(fh, 8, "dimensions"))
        payload = _read_exact(fh, 4 * n_x * n_y, "payload")
    return np.frombuffer(payload, dtype="<f4").reshape(n_y, n_x).astype(
        np.float64)


def write_grid(path, grid):
    """Occupancy cells as one byte each, plus a JSON bounds sidecar."""
    cells = np.ascontiguousarray(grid.cells, dtype=np.uint8)
    gx, gy, gz = cells.shape
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, gx, gy, gz))
        fh.write(cells.tobytes())
    sidecar = {
        "lo": [float(x) for x in grid.lo],
        "hi": [float(x) for x in grid.hi],
        "resolution": [gx, gy, gz],
        "states": {"unknown": 0, "empty": 1, "occupied": 2},
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def read_grid(path):
    from .carve import OccupancyGrid
    with open(path, "rb") as fh:
        _check_header(fh, GRID_MAGIC)
        gx, gy, gz = struct.unpack("<III", _read_exact(fh, 12, "dimensions"))
        payload = _read_exact(fh, gx * gy * gz, "payload")
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    cells = np.frombuffer(payload, dtype=np.uint8).reshape(gx, gy, gz)
    return OccupancyGrid(cells.copy(), np.array(sidecar["lo"]),
                         np.array(sidecar["hi"]))


def write_pgm(path, image):
    """8-bit binary PGM. Boolean input maps to 0 / 255."""
    arr = np.asarray(image)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM payload must be 2-D")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P5":
            raise BadMagicError("not a binary PGM file")
        dims = fh.readline().split()
        maxval = fh.readline().strip()
        if len(dims) != 2 or maxval != b"255":
            raise FileFormatError("unsupported PGM header")
        w, h = int(dims[0]), int(dims[1])
        payload = _read_exact(fh, w * h, "payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_frame_sequence(out_dir, cube, prefix="frame"):
    """Export a cube as per-bin 8-bit frames with per-frame max normalization.

    The sidecar records each frame's normalization factor so absolute
    amplitudes can be recovered.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scales = []
    for k in range(cube.n_t):
        frame = cube.data[:, :, k].astype(np.float64)
        peak = float(frame.max())
        scales.append(peak)
        img = np.zeros(frame.shape, dtype=np.uint8) if peak <= 0 else \
            np.round(frame / peak * 255.0).astype(np.uint8)
        write_pgm(out / f"{prefix}_{k:05d}.pgm", img)
    meta = {
        "frames": cube.n_t,
        "prefix": prefix,
        "delta_ps": cube.delta * 1e12,
        "gate_path_min_m": cube.gate_path_min,
        "frame_max": scales,
    }
    (out / f"{prefix}_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return meta


def sha256_of(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, entries, config=None):
    """Manifest of artifact paths with content hashes, sorted by path."""
    base = Path(path).parent
    listed = []
    for p in sorted(str(e) for e in entries):
        listed.append({
            "path": str(Path(p).relative_to(base)),
            "sha256": sha256_of(p),
            "bytes": Path(p).stat().st_size,
        })
    doc = {"config": config or {}, "artifacts": listed}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return doc


def verify_manifest(path):
    """Re-hash every listed artifact; returns a list of mismatch messages."""
    doc = json.loads(Path(path).read_text())
    base = Path(path).parent
    problems = []
    for entry in doc["artifacts"]:
        p = base / entry["path"]
        if not p.exists():
            problems.append(f"missing: {entry['path']}")
        elif sha256_of(p) != entry["sha256"]:
            problems.append(f"hash mismatch: {entry['path']}")
    return problems
