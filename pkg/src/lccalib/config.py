"""JSON configuration schemas for the command-line tools.

A calibration config bundles the target description, camera intrinsics,
ROI box, extraction thresholds and the scene file list. Paths inside a
config are resolved relative to the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import RigidTransform
from .lidar import ExtractionParams, RoiBounds
from .registration import transform_from_dict
from .simulator import PoseSampler, ScanPattern, SensorNoise
from .target import (
    CameraIntrinsics,
    TargetGeometry,
    intrinsics_from_dict,
    load_intrinsics,
    load_target_config,
    target_from_dict,
)


@dataclass(frozen=True)
class SceneFiles:
    scene_id: str
    cloud_path: Path
    detections_path: Path


@dataclass(frozen=True)
class CalibConfig:
    target: TargetGeometry
    intrinsics: CameraIntrinsics
    roi: RoiBounds
    params: ExtractionParams
    scenes: tuple[SceneFiles, ...]

    def __post_init__(self):
        if len(self.scenes) < 1:
            raise ValidationError("config: need at least one scene")


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})") from e


def _resolve_target(value, base: Path) -> TargetGeometry:
    if isinstance(value, str):
        return load_target_config(base / value)
    if isinstance(value, dict):
        return target_from_dict(value)
    raise ParseError("config: 'target' must be a path or an inline object")


def _resolve_intrinsics(value, base: Path) -> CameraIntrinsics:
    if isinstance(value, str):
        return load_intrinsics(base / value)
    if isinstance(value, dict):
        return intrinsics_from_dict(value)
    raise ParseError("config: 'intrinsics' must be a path or an inline object")


def _parse_thresholds(d: dict | None) -> ExtractionParams:
    if d is None:
        return ExtractionParams()
    valid = {f.name for f in fields(ExtractionParams)}
    unknown = set(d) - valid
    if unknown:
        raise ValidationError(f"thresholds: unknown keys {sorted(unknown)}")
    params = ExtractionParams(**d)
    for name in ("ransac_inlier_m", "voxel_leaf_m", "edge_radius_m", "edge_gap_deg",
                 "axis_tol_m", "ecc_max", "cluster_tol_m"):
        if not getattr(params, name) > 0:
            raise ValidationError(f"thresholds: {name} must be positive")
    if params.cluster_min < 1 or params.ransac_iters < 1:
        raise ValidationError("thresholds: cluster_min and ransac_iters must be >= 1")
    return params


def parse_calib_config(d: dict, base: Path) -> CalibConfig:
    try:
        roi = RoiBounds(**{k: float(v) for k, v in d["roi"].items()})
        raw_scenes = d["scenes"]
        target = _resolve_target(d["target"], base)
        intr = _resolve_intrinsics(d["intrinsics"], base)
    except KeyError as e:
        raise ParseError(f"config: missing key {e}") from e
    params = _parse_thresholds(d.get("thresholds"))
    scenes = []
    for i, s in enumerate(raw_scenes):
        try:
            scenes.append(SceneFiles(
                scene_id=str(s.get("id", f"scene_{i:03d}")),
                cloud_path=base / s["cloud"],
                detections_path=base / s["detections"],
            ))
        except KeyError as e:
            raise ParseError(f"config: scene {i} missing key {e}") from e
    return CalibConfig(target=target, intrinsics=intr, roi=roi, params=params,
                       scenes=tuple(scenes))


def load_calib_config(path) -> CalibConfig:
    path = Path(path)
    return parse_calib_config(_load_json(path), path.parent)


@dataclass(frozen=True)
class SimConfig:
    target: TargetGeometry
    intrinsics: CameraIntrinsics
    t_cl_true: RigidTransform
    n_scenes: int
    seed: int
    pattern: ScanPattern
    noise: SensorNoise
    sampler: PoseSampler
    corner_noise_px: float
    image_size: tuple[int, int]
    background_offset: float | None
    board_margin: float
    ascii_pcd: bool


_DEFAULT_T_CL = {
    # camera looking along lidar +x, mounted with a small offset
    "matrix_4x4_row_major": [
        0.0, -1.0, 0.0, 0.05,
        0.0, 0.0, -1.0, -0.03,
        1.0, 0.0, 0.0, 0.02,
        0.0, 0.0, 0.0, 1.0,
    ]
}


def parse_sim_config(d: dict, base: Path) -> SimConfig:
    try:
        target = _resolve_target(d["target"], base)
        intr = _resolve_intrinsics(d["intrinsics"], base)
    except KeyError as e:
        raise ParseError(f"sim config: missing key {e}") from e
    t_cl = transform_from_dict(d.get("t_cl_true", _DEFAULT_T_CL))
    pat = d.get("pattern", {})
    if "petal_rates" in pat:
        pat = dict(pat)
        pat["petal_rates"] = tuple(float(v) for v in pat["petal_rates"])
    pattern = ScanPattern(**pat)
    nz = d.get("noise", {})
    noise = SensorNoise(
        range_sigma=float(nz.get("range_sigma_m", 0.0)),
        dilation_depth=float(nz.get("dilation_depth_m", 0.0)),
        dropout_prob=float(nz.get("dropout_prob", 0.0)),
    )
    ps = d.get("pose_sampler", {})
    sampler = PoseSampler(
        distance_range=tuple(ps.get("distance_range_m", PoseSampler.distance_range)),
        lateral_range=tuple(ps.get("lateral_range_m", PoseSampler.lateral_range)),
        height_range=tuple(ps.get("height_range_m", PoseSampler.height_range)),
        tilt_max_deg=float(ps.get("tilt_max_deg", PoseSampler.tilt_max_deg)),
        roll_max_deg=float(ps.get("roll_max_deg", PoseSampler.roll_max_deg)),
    )
    bg = d.get("background", {"enabled": True, "offset_m": 1.5})
    background_offset = float(bg.get("offset_m", 1.5)) if bg.get("enabled", True) else None
    image_size = tuple(int(v) for v in d.get("image_size", (1280, 1024)))
    return SimConfig(
        target=target,
        intrinsics=intr,
        t_cl_true=t_cl,
        n_scenes=int(d.get("n_scenes", 4)),
        seed=int(d.get("seed", 1)),
        pattern=pattern,
        noise=noise,
        sampler=sampler,
        corner_noise_px=float(d.get("corner_noise_px", 0.0)),
        image_size=image_size,  # type: ignore[arg-type]
        background_offset=background_offset,
        board_margin=float(d.get("board_margin_m", 0.033)),
        ascii_pcd=bool(d.get("ascii_pcd", False)),
    )


def load_sim_config(path) -> SimConfig:
    path = Path(path)
    return parse_sim_config(_load_json(path), path.parent)
