"""On-disk raster and point-cloud formats.

Depth is PFM (little-endian, scale -1.0, bottom-up rows). Instance masks are
16-bit grayscale PNG, semantics 8-bit grayscale PNG, RGB 8-bit PNG. LiDAR is
binary little-endian PLY. All writers are byte-deterministic.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

PLY_DTYPE = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("instance_id", "<u2"), ("ring", "u1"), ("azimuth", "<f4"),
])


def write_pfm(path, data: np.ndarray) -> None:
    """Single-channel PFM, little-endian (negative scale), bottom-up rows."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("PFM writer expects a 2D raster")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError("not a single-channel PFM file")
        width, height = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * width * height), dtype=dtype)
    return np.flipud(data.reshape(height, width)).astype(np.float32)


def write_png_rgb(path, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def write_png_gray(path, gray: np.ndarray) -> None:
    Image.fromarray(np.asarray(gray, dtype=np.uint8), mode="L").save(path)


def write_png_gray16(path, gray: np.ndarray) -> None:
    arr = np.asarray(gray, dtype=np.uint16)
    Image.fromarray(arr, mode="I;16").save(path)


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.array(img)
    if arr.dtype == np.int32:  # PIL promotes 16-bit gray to mode "I"
        arr = arr.astype(np.uint16)
    return arr


def write_ply(path, xyz: np.ndarray, instance_ids: np.ndarray,
              ring_index: np.ndarray, azimuth_rad: np.ndarray) -> None:
    """Binary little-endian PLY with per-point instance/ring/azimuth."""
    n = len(xyz)
    rec = np.empty(n, dtype=PLY_DTYPE)
    rec["x"] = xyz[:, 0]
    rec["y"] = xyz[:, 1]
    rec["z"] = xyz[:, 2]
    rec["instance_id"] = instance_ids
    rec["ring"] = ring_index
    rec["azimuth"] = azimuth_rad
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property ushort instance_id\n"
        "property uchar ring\n"
        "property float azimuth\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())


def read_ply(path) -> np.ndarray:
    """Read back a PLY written by write_ply; returns the structured array."""
    with open(path, "rb") as fh:
        line = fh.readline()
        if line.strip() != b"ply":
            raise ValueError("not a PLY file")
        n = None
        while True:
            line = fh.readline()
            if not line:
                raise ValueError("truncated PLY header")
            if line.startswith(b"element vertex"):
                n = int(line.split()[-1])
            if line.strip() == b"end_header":
                break
        if n is None:
            raise ValueError("PLY header missing vertex element")
        return np.frombuffer(fh.read(n * PLY_DTYPE.itemsize), dtype=PLY_DTYPE)
