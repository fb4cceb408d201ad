"""On-disk formats: portable pixmaps, portable float maps, pose tables.

Color images are 8-bit binary PPM (P6); single-channel float data (depth,
disparity) uses the PFM format with a negative scale field marking
little-endian payloads.  Poses are one comma-separated text line per frame.
"""

from __future__ import annotations

import numpy as np

from .errors import CylSfmError
from .synthesis import Pose6


def write_ppm(path, img) -> None:
    """Save a float image in [0, 1] (H, W, 3) as binary 8-bit PPM."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise CylSfmError(f"PPM needs (H, W, 3), got {img.shape}")
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Load a binary PPM as float64 in [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(b"P6"):
        raise CylSfmError(f"{path} is not a binary PPM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height * 3, offset=pos)
    return data.reshape(height, width, 3).astype(np.float64) / maxval


def write_pfm(path, data) -> None:
    """Save a single-channel float map as little-endian PFM (scale -1.0).

    PFM stores rows bottom-up, so the array is flipped on write.
    """
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise CylSfmError(f"PFM writer needs a 2-D map, got {data.shape}")
    with open(path, "wb") as f:
        f.write(f"Pf\n{data.shape[1]} {data.shape[0]}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"Pf":
            raise CylSfmError(f"{path} is not a grayscale PFM")
        dims = f.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(4 * width * height), dtype=dtype)
    return np.flipud(data.reshape(height, width)).astype(np.float64)


def write_poses(path, poses) -> None:
    """Global camera poses, one line per frame: index, t_x..t_z, ax..az."""
    with open(path, "w") as f:
        for i, p in enumerate(poses):
            vec = p.to_vector() if isinstance(p, Pose6) else np.asarray(p, dtype=np.float64)
            f.write(f"{i}, " + ", ".join(f"{v:.17g}" for v in vec) + "\n")


def read_poses(path) -> list:
    poses = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [float(v) for v in line.split(",")]
            if len(parts) != 7:
                raise CylSfmError(f"pose line needs 7 fields, got {len(parts)}")
            poses.append(Pose6(np.array(parts[1:4]), np.array(parts[4:7])))
    return poses


def write_report(path, header, rows, aggregate) -> None:
    """Line-oriented evaluation report with named fields per row."""
    with open(path, "w") as f:
        f.write(f"# {header}\n")
        for label, values in rows:
            f.write(f"row={label} " + " ".join(
                f"{k}={v:.17g}" for k, v in values.items()) + "\n")
        f.write("row=aggregate " + " ".join(
            f"{k}={v:.17g}" for k, v in aggregate.items()) + "\n")
