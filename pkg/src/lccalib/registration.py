"""Closed-form rigid registration of corresponded hole-center sets.

The multi-scene problem stacks 4 correspondences per scene into a single
4N-point least-squares objective solved in closed form by SVD with
reflection correction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, ParseError, SceneMismatchError, ValidationError
from .geometry import RigidTransform, quat_from_rotation, rotation_from_quat


@dataclass(frozen=True)
class CalibrationScene:
    """One paired capture: hole centers in both frames, index-matched."""

    centers_lidar: np.ndarray   # (4, 3), canonical order
    centers_camera: np.ndarray  # (4, 3), canonical order
    scene_id: str

    def __post_init__(self):
        pl = np.asarray(self.centers_lidar, dtype=np.float64)
        pc = np.asarray(self.centers_camera, dtype=np.float64)
        if pl.shape != (4, 3) or pc.shape != (4, 3):
            raise SceneMismatchError(
                f"scene {self.scene_id}: both center sets must be (4, 3), "
                f"got {pl.shape} and {pc.shape}"
            )
        if not (np.all(np.isfinite(pl)) and np.all(np.isfinite(pc))):
            raise SceneMismatchError(f"scene {self.scene_id}: centers must be finite")
        object.__setattr__(self, "centers_lidar", pl)
        object.__setattr__(self, "centers_camera", pc)


@dataclass(frozen=True)
class CalibrationResult:
    """Joint extrinsic estimate with residual diagnostics."""

    T_CL: RigidTransform
    rms_total: float
    rms_per_scene: dict[str, float]
    residual_per_point: np.ndarray  # (4N,) meters

    def __post_init__(self):
        res = np.asarray(self.residual_per_point, dtype=np.float64)
        n = len(res)
        if n == 0 or n % 4 != 0:
            raise ValidationError("residual_per_point: length must be a positive multiple of 4")
        recomputed = float(np.sqrt((res ** 2).mean()))
        if abs(recomputed - self.rms_total) > 1e-12 + 1e-9 * recomputed:
            raise ValidationError("rms_total inconsistent with residual_per_point")
        object.__setattr__(self, "residual_per_point", res)


def kabsch(src, dst) -> RigidTransform:
    """Least-squares rigid transform T with dst ~= T(src).

    Centroid-subtracted cross-covariance SVD; det(R) = +1 is enforced by
    flipping the smallest singular direction.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise DegenerateInputError(
            f"kabsch: point sets must both be (M, 3), got {src.shape} and {dst.shape}"
        )
    if len(src) < 3:
        raise DegenerateInputError(f"kabsch: need >= 3 correspondences, got {len(src)}")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    qs = src - cs
    s = np.linalg.svd(qs, compute_uv=False)
    if s[1] <= 1e-12 * max(1.0, s[0]):
        raise DegenerateInputError("kabsch: source points are collinear or coincident")
    h = qs.T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    if sign == 0:
        sign = 1.0
    rot = vt.T @ np.diag([1.0, 1.0, sign]) @ u.T
    # re-orthonormalize to keep the RigidTransform invariant at 1e-9
    uu, _, vvt = np.linalg.svd(rot)
    rot = uu @ vvt
    if np.linalg.det(rot) < 0:
        uu[:, -1] = -uu[:, -1]
        rot = uu @ vvt
    return RigidTransform(rot, cd - rot @ cs)


def _stack_scenes(scenes) -> tuple[np.ndarray, np.ndarray]:
    if not scenes:
        raise SceneMismatchError("joint_calibrate: need at least one scene")
    src = np.vstack([s.centers_lidar for s in scenes])
    dst = np.vstack([s.centers_camera for s in scenes])
    return src, dst


def joint_calibrate(scenes: list[CalibrationScene]) -> CalibrationResult:
    """Single stacked solve over all 4N correspondences."""
    src, dst = _stack_scenes(scenes)
    t_cl = kabsch(src, dst)
    rms, per_point = evaluate_residual(t_cl, scenes)
    per_scene = {}
    for k, s in enumerate(scenes):
        r = per_point[4 * k:4 * (k + 1)]
        per_scene[s.scene_id] = float(np.sqrt((r ** 2).mean()))
    return CalibrationResult(
        T_CL=t_cl,
        rms_total=rms,
        rms_per_scene=per_scene,
        residual_per_point=per_point,
    )


def evaluate_residual(
    T: RigidTransform,
    scenes: list[CalibrationScene],
) -> tuple[float, np.ndarray]:
    """RMS and per-point norms of p_camera - T(p_lidar); pure evaluation."""
    src, dst = _stack_scenes(scenes)
    res = dst - T.apply(src)
    per_point = np.linalg.norm(res, axis=1)
    rms = float(np.sqrt((per_point ** 2).mean()))
    return rms, per_point


def result_to_dict(result: CalibrationResult) -> dict:
    t = result.T_CL
    return {
        "T_CL": {
            "matrix_4x4_row_major": [float(v) for v in t.matrix4.reshape(-1)],
            "quaternion_wxyz": [float(v) for v in quat_from_rotation(t.rotation)],
            "translation_xyz_m": [float(v) for v in t.translation],
        },
        "rms_total_m": result.rms_total,
        "per_scene": {k: float(v) for k, v in result.rms_per_scene.items()},
    }


def save_extrinsics(path, result: CalibrationResult) -> None:
    Path(path).write_text(json.dumps(result_to_dict(result), indent=2) + "\n")


def transform_from_dict(d: dict) -> RigidTransform:
    if "matrix_4x4_row_major" in d:
        return RigidTransform.from_matrix4(np.asarray(d["matrix_4x4_row_major"], dtype=np.float64))
    if "quaternion_wxyz" in d and "translation_xyz_m" in d:
        return RigidTransform(
            rotation_from_quat(np.asarray(d["quaternion_wxyz"], dtype=np.float64)),
            np.asarray(d["translation_xyz_m"], dtype=np.float64),
        )
    raise ParseError("transform: need matrix_4x4_row_major or quaternion_wxyz + translation_xyz_m")


def transform_to_dict(t: RigidTransform) -> dict:
    return {
        "matrix_4x4_row_major": [float(v) for v in t.matrix4.reshape(-1)],
        "quaternion_wxyz": [float(v) for v in quat_from_rotation(t.rotation)],
        "translation_xyz_m": [float(v) for v in t.translation],
    }


def load_extrinsics(path) -> RigidTransform:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"extrinsics {path}: invalid JSON ({e})") from e
    if "T_CL" in d:
        d = d["T_CL"]
    return transform_from_dict(d)
