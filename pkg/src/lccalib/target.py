"""Calibration target description: hole layout, marker layout, intrinsics.

The board frame has its origin at the board center, the front face on the
z = 0 plane, +z toward the sensors, +x right and +y up as seen from the
sensor side. Hole centers are given in canonical order (top-left,
top-right, bottom-right, bottom-left seen from the sensor side); that
order defines correspondence indices everywhere downstream.

No default target dimensions ship with the tool; geometry is always
user-supplied via config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import RigidTransform


@dataclass(frozen=True)
class MarkerSpec:
    """One square fiducial marker on the board front face (z = 0)."""

    id: int
    center_board: np.ndarray  # (3,) board frame, z = 0
    side_length: float        # meters

    def __post_init__(self):
        c = np.asarray(self.center_board, dtype=np.float64)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise ValidationError(f"marker {self.id}: center_board must be a finite 3-vector")
        if c[2] != 0.0:
            raise ValidationError(f"marker {self.id}: center_board.z must be 0")
        if not self.side_length > 0:
            raise ValidationError(f"marker {self.id}: side_length must be > 0")
        object.__setattr__(self, "center_board", c)
        object.__setattr__(self, "side_length", float(self.side_length))


@dataclass(frozen=True)
class TargetGeometry:
    """Physical layout of holes and markers in the board frame."""

    hole_radius: float
    hole_centers_board: np.ndarray        # (4, 3), z = 0, canonical order
    markers: tuple[MarkerSpec, ...]

    def __post_init__(self):
        if not self.hole_radius > 0:
            raise ValidationError("hole_radius: must be > 0")
        centers = np.asarray(self.hole_centers_board, dtype=np.float64)
        if centers.shape != (4, 3):
            raise ValidationError(
                f"hole_centers_board: expected 4 centers, got shape {centers.shape}"
            )
        if not np.all(np.isfinite(centers)):
            raise ValidationError("hole_centers_board: must be finite")
        if np.any(centers[:, 2] != 0.0):
            raise ValidationError("hole_centers_board: all centers must have z = 0")
        for i in range(4):
            for j in range(i + 1, 4):
                d = np.linalg.norm(centers[i] - centers[j])
                if d < 2.0 * self.hole_radius:
                    raise ValidationError(
                        f"hole_centers_board: centers {i} and {j} are {d:.4f} m apart, "
                        f"closer than 2*hole_radius = {2 * self.hole_radius:.4f} m"
                    )
        markers = tuple(self.markers)
        if len(markers) != 4:
            raise ValidationError(f"markers: expected 4, got {len(markers)}")
        ids = [m.id for m in markers]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"markers: ids must be unique, got {ids}")
        object.__setattr__(self, "hole_radius", float(self.hole_radius))
        object.__setattr__(self, "hole_centers_board", centers)
        object.__setattr__(self, "markers", markers)

    def marker_by_id(self, marker_id: int) -> MarkerSpec | None:
        for m in self.markers:
            if m.id == marker_id:
                return m
        return None


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with radial-tangential distortion (k1,k2,p1,p2,k3)."""

    fx: float
    fy: float
    cx: float
    cy: float
    distortion: np.ndarray  # (5,)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("intrinsics: fx and fy must be > 0")
        d = np.asarray(self.distortion, dtype=np.float64)
        if d.shape != (5,) or not np.all(np.isfinite(d)):
            raise ValidationError("intrinsics: distortion must be 5 finite scalars")
        object.__setattr__(self, "distortion", d)


def marker_corners_board(m: MarkerSpec) -> np.ndarray:
    """Corners of the marker square in the board frame.

    Fixed order top-left, top-right, bottom-right, bottom-left with +x
    right and +y up; z = 0.
    """
    h = m.side_length / 2.0
    offs = np.array([
        [-h, h, 0.0],
        [h, h, 0.0],
        [h, -h, 0.0],
        [-h, -h, 0.0],
    ])
    return m.center_board[None, :] + offs


def hole_centers_in_frame(g: TargetGeometry, t_board: RigidTransform) -> np.ndarray:
    """Hole centers transformed out of the board frame, order preserved."""
    return t_board.apply(g.hole_centers_board)


def target_from_dict(d: dict) -> TargetGeometry:
    try:
        hole_radius = float(d["hole_radius_m"])
        raw_centers = d["hole_centers_board_m"]
        raw_markers = d["markers"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"target config: missing or malformed key ({e})") from e
    if not isinstance(raw_centers, list) or len(raw_centers) != 4:
        raise ValidationError(
            f"hole_centers_board: expected 4, got {len(raw_centers) if isinstance(raw_centers, list) else type(raw_centers).__name__}"
        )
    centers = []
    for c in raw_centers:
        if len(c) == 2:
            c = [c[0], c[1], 0.0]
        centers.append([float(v) for v in c])
    markers = []
    for rm in raw_markers:
        try:
            cb = rm["center_board_m"]
            if len(cb) == 2:
                cb = [cb[0], cb[1], 0.0]
            markers.append(MarkerSpec(
                id=int(rm["id"]),
                center_board=np.asarray(cb, dtype=np.float64),
                side_length=float(rm["side_length_m"]),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"target config: malformed marker ({e})") from e
    return TargetGeometry(
        hole_radius=hole_radius,
        hole_centers_board=np.asarray(centers, dtype=np.float64),
        markers=tuple(markers),
    )


def target_to_dict(g: TargetGeometry) -> dict:
    return {
        "hole_radius_m": g.hole_radius,
        "hole_centers_board_m": [list(c) for c in g.hole_centers_board],
        "markers": [
            {
                "id": m.id,
                "center_board_m": list(m.center_board),
                "side_length_m": m.side_length,
            }
            for m in g.markers
        ],
    }


def load_target_config(path) -> TargetGeometry:
    """Load and validate a target geometry JSON file."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"target config {path}: invalid JSON ({e})") from e
    return target_from_dict(d)


def intrinsics_from_dict(d: dict) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            distortion=np.asarray(d["distortion"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"intrinsics: missing or malformed key ({e})") from e


def intrinsics_to_dict(intr: CameraIntrinsics) -> dict:
    return {
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "distortion": list(intr.distortion),
    }


def load_intrinsics(path) -> CameraIntrinsics:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"intrinsics {path}: invalid JSON ({e})") from e
    return intrinsics_from_dict(d)
