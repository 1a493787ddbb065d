"""Minimal PPM image I/O (P3 ascii and P6 binary, maxval <= 255)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def _read_tokens(raw: bytes, count: int, pos: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    n = len(raw)
    while len(tokens) < count:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            nl = raw.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
            continue
        start = pos
        while pos < n and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("PPM: truncated header")
        try:
            tokens.append(int(raw[start:pos]))
        except ValueError as e:
            raise FormatError(f"PPM: bad header token {raw[start:pos]!r}") from e
    return tokens, pos


def load_ppm(path) -> np.ndarray:
    """Load a P3/P6 PPM as an (H, W, 3) uint8 array."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P3", b"P6"):
        raise FormatError(f"PPM: magic must be P3 or P6, got {raw[:2]!r}")
    magic = raw[:2]
    (width, height, maxval), pos = _read_tokens(raw, 3, 2)
    if maxval <= 0 or maxval > 255:
        raise FormatError(f"PPM: unsupported maxval {maxval}")
    n_vals = width * height * 3
    if magic == b"P6":
        pos += 1  # single whitespace after maxval
        body = raw[pos:pos + n_vals]
        if len(body) < n_vals:
            raise FormatError(f"PPM: body has {len(body)} bytes, expected {n_vals}")
        img = np.frombuffer(body, dtype=np.uint8, count=n_vals)
    else:
        vals, _ = _read_tokens(raw, n_vals, pos)
        img = np.asarray(vals, dtype=np.uint8)
    return img.reshape(height, width, 3)


def save_ppm(path, image: np.ndarray, binary: bool = True) -> None:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PPM: image must be (H, W, 3), got {img.shape}")
    h, w, _ = img.shape
    if binary:
        header = f"P6\n{w} {h}\n255\n".encode("ascii")
        Path(path).write_bytes(header + img.tobytes())
    else:
        body = "\n".join(" ".join(str(v) for v in row.reshape(-1)) for row in img)
        Path(path).write_text(f"P3\n{w} {h}\n255\n{body}\n")
