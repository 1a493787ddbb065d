"""PCD v0.7 point cloud I/O.

Reads ASCII and little-endian binary files whose FIELDS include x, y, z
(f32 or f64); VIEWPOINT is ignored. Writes ASCII or binary with float64
coordinates so that save -> load round-trips are exact. NaN rows are
dropped on load and the count reported.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedError
from .geometry import PointCloud

_TYPE_MAP = {
    ("F", 4): "<f4",
    ("F", 8): "<f8",
    ("I", 1): "<i1",
    ("I", 2): "<i2",
    ("I", 4): "<i4",
    ("U", 1): "<u1",
    ("U", 2): "<u2",
    ("U", 4): "<u4",
}


def _parse_header(raw: bytes):
    lines = []
    pos = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise FormatError("PCD: no DATA line found in header")
        line = raw[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        if line.startswith("#") or not line:
            continue
        lines.append(line)
        if line.split()[0].upper() == "DATA":
            break
        if len(lines) > 64:
            raise FormatError("PCD: header too long")
    hdr: dict[str, list[str]] = {}
    for line in lines:
        parts = line.split()
        hdr[parts[0].upper()] = parts[1:]
    for key in ("FIELDS", "SIZE", "TYPE", "POINTS", "DATA"):
        if key not in hdr:
            raise FormatError(f"PCD: missing {key} in header")
    return hdr, pos


def load_pcd(path) -> tuple[PointCloud, int]:
    """Load a PCD file.

    Returns (cloud, dropped) where dropped counts NaN/Inf rows removed.
    """
    raw = Path(path).read_bytes()
    hdr, body_start = _parse_header(raw)

    fields = [f.lower() for f in hdr["FIELDS"]]
    sizes = [int(s) for s in hdr["SIZE"]]
    types = [t.upper() for t in hdr["TYPE"]]
    counts = [int(c) for c in hdr.get("COUNT", ["1"] * len(fields))]
    n_points = int(hdr["POINTS"][0])
    data_mode = hdr["DATA"][0].lower()

    if any(c != 1 for c in counts):
        raise UnsupportedError("PCD: COUNT != 1 fields are not supported")
    if not {"x", "y", "z"}.issubset(fields):
        raise UnsupportedError(f"PCD: FIELDS must include x y z, got {fields}")

    if data_mode == "ascii":
        body = raw[body_start:].decode("ascii", errors="replace")
        try:
            flat = np.fromstring(body, sep=" ", dtype=np.float64)
        except Exception as e:  # pragma: no cover
            raise FormatError(f"PCD: cannot parse ascii body ({e})") from e
        if flat.size != n_points * len(fields):
            # fromstring stops at the first bad token; recover row count
            if flat.size % len(fields) != 0:
                raise FormatError(
                    f"PCD: ascii body has {flat.size} values, "
                    f"expected {n_points * len(fields)}"
                )
        table = flat.reshape(-1, len(fields))
        if len(table) != n_points:
            raise FormatError(
                f"PCD: ascii body has {len(table)} rows, POINTS says {n_points}"
            )
        cols = {f: table[:, i] for i, f in enumerate(fields)}
    elif data_mode == "binary":
        dtype = np.dtype([
            (f, _type_code(t, s)) for f, t, s in zip(fields, types, sizes)
        ])
        need = n_points * dtype.itemsize
        body = raw[body_start:body_start + need]
        if len(body) < need:
            raise FormatError(
                f"PCD: binary body has {len(body)} bytes, expected {need}"
            )
        rec = np.frombuffer(body, dtype=dtype, count=n_points)
        cols = {f: rec[f].astype(np.float64) for f in fields}
    elif data_mode == "binary_compressed":
        raise UnsupportedError("PCD: binary_compressed is not supported")
    else:
        raise FormatError(f"PCD: unknown DATA mode {data_mode!r}")

    pts = np.column_stack([cols["x"], cols["y"], cols["z"]])
    finite = np.all(np.isfinite(pts), axis=1)
    dropped = int(len(pts) - finite.sum())
    pts = pts[finite]
    intensity = None
    if "intensity" in cols:
        intensity = cols["intensity"][finite]
    return PointCloud(pts, intensity), dropped


def _type_code(t: str, s: int) -> str:
    try:
        return _TYPE_MAP[(t, s)]
    except KeyError:
        raise UnsupportedError(f"PCD: unsupported TYPE/SIZE {t}{s}") from None


def _header_lines(fields, sizes, types, n, data_mode):
    return (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        f"FIELDS {' '.join(fields)}\n"
        f"SIZE {' '.join(str(s) for s in sizes)}\n"
        f"TYPE {' '.join(types)}\n"
        f"COUNT {' '.join('1' for _ in fields)}\n"
        f"WIDTH {n}\n"
        "HEIGHT 1\n"
        "VIEWPOINT 0 0 0 1 0 0 0\n"
        f"POINTS {n}\n"
        f"DATA {data_mode}\n"
    )


def save_pcd(path, cloud: PointCloud, binary: bool = True) -> None:
    """Write a cloud as PCD v0.7 with float64 coordinates."""
    pts = cloud.points
    fields = ["x", "y", "z"]
    cols = [pts[:, 0], pts[:, 1], pts[:, 2]]
    if cloud.intensity is not None:
        fields.append("intensity")
        cols.append(cloud.intensity)
    mode = "binary" if binary else "ascii"
    header = _header_lines(fields, [8] * len(fields), ["F"] * len(fields), len(pts), mode)
    path = Path(path)
    if binary:
        rec = np.empty(len(pts), dtype=np.dtype([(f, "<f8") for f in fields]))
        for f, c in zip(fields, cols):
            rec[f] = c
        path.write_bytes(header.encode("ascii") + rec.tobytes())
    else:
        body_rows = np.column_stack(cols)
        lines = "\n".join(" ".join(repr(float(v)) for v in row) for row in body_rows)
        path.write_text(header + lines + ("\n" if len(pts) else ""))


def save_colored_pcd(path, points: np.ndarray, rgb: np.ndarray) -> None:
    """Write x y z rgb PCD (PCL packed-uint32 rgb convention), binary."""
    points = np.asarray(points, dtype=np.float64)
    rgb = np.asarray(rgb, dtype=np.uint32)
    packed = (rgb[:, 0] << 16) | (rgb[:, 1] << 8) | rgb[:, 2]
    header = _header_lines(["x", "y", "z", "rgb"], [8, 8, 8, 4], ["F", "F", "F", "U"],
                           len(points), "binary")
    rec = np.empty(len(points), dtype=np.dtype(
        [("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("rgb", "<u4")]))
    rec["x"], rec["y"], rec["z"] = points[:, 0], points[:, 1], points[:, 2]
    rec["rgb"] = packed
    Path(path).write_bytes(header.encode("ascii") + rec.tobytes())


def load_colored_pcd(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back an x y z rgb PCD; returns (points (N,3), rgb (N,3) uint8)."""
    raw = Path(path).read_bytes()
    hdr, body_start = _parse_header(raw)
    fields = [f.lower() for f in hdr["FIELDS"]]
    sizes = [int(s) for s in hdr["SIZE"]]
    types = [t.upper() for t in hdr["TYPE"]]
    n = int(hdr["POINTS"][0])
    if "rgb" not in fields:
        raise UnsupportedError("PCD: no rgb field")
    dtype = np.dtype([(f, _type_code(t, s)) for f, t, s in zip(fields, types, sizes)])
    rec = np.frombuffer(raw[body_start:body_start + n * dtype.itemsize], dtype=dtype, count=n)
    pts = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
    packed = rec["rgb"].astype(np.uint32)
    rgb = np.column_stack([(packed >> 16) & 0xFF, (packed >> 8) & 0xFF, packed & 0xFF])
    return pts, rgb.astype(np.uint8)
