"""Synthetic calibration data with exact ground truth.

Casts rays from the LiDAR origin against the target board under three
scan-pattern families, models hole pass-through, spot-spread edge dilation
(returns just inside a hole boundary are still produced, making holes
appear expanded inward), range noise and dropout, and forward-projects
marker corners into a pinhole+distortion camera. Scene sets are emitted as
PCD + JSON files with a manifest, byte-reproducible for a fixed seed.

Frames: LiDAR x forward / y left / z up; camera z forward / x right /
y down; the board frame is the target frame (+z toward the sensors).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .camera import MarkerDetection, detections_to_dict, project_points
from .errors import (
    NoVisibilityError,
    OutOfViewError,
    PoseSamplingExhaustedError,
    ValidationError,
)
from .geometry import PointCloud, RigidTransform, rotation_about_axis
from .registration import transform_to_dict, transform_from_dict
from .target import (
    CameraIntrinsics,
    TargetGeometry,
    intrinsics_to_dict,
    marker_corners_board,
    target_to_dict,
)
from .pcd import save_pcd

PATTERN_KINDS = ("uniform_random", "mechanical_rings", "rosette")


@dataclass(frozen=True)
class ScanPattern:
    """Ray-direction generator description.

    azimuth_span_deg / elevation_span_deg define an explicit window
    centered on the forward axis; when None the window is fitted to the
    board silhouette per scene (an aimed sensor).
    """

    kind: str = "uniform_random"
    n_samples: int = 100_000                     # uniform_random, rosette
    n_rings: int = 16                            # mechanical_rings
    n_sweeps: int = 1                            # accumulation sweeps (mechanical)
    angular_resolution_deg: float = 0.1          # mechanical azimuth step
    petal_rates: tuple[float, float] = (997.0, 13.37)   # rosette frequencies
    amplitude_scale: float = 1.2                 # rosette amplitude vs window
    azimuth_span_deg: float | None = None
    elevation_span_deg: float | None = None

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValidationError(f"pattern kind must be one of {PATTERN_KINDS}, got {self.kind!r}")
        if self.n_samples < 1 or self.n_rings < 1 or self.n_sweeps < 1:
            raise ValidationError("pattern counts must be positive")
        if not self.angular_resolution_deg > 0:
            raise ValidationError("pattern angular resolution must be positive")
        if len(self.petal_rates) != 2 or self.petal_rates[0] <= 0 or self.petal_rates[1] <= 0:
            raise ValidationError("petal_rates must be two positive frequencies")


@dataclass(frozen=True)
class SensorNoise:
    """Range noise, spot-spread dilation depth, and dropout probability."""

    range_sigma: float = 0.0
    dilation_depth: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.range_sigma < 0 or self.dilation_depth < 0:
            raise ValidationError("noise magnitudes must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValidationError("dropout_prob must be in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    """Per-scene oracle: poses and hole centers in both frames."""

    T_CL_true: RigidTransform
    board_pose_lidar: RigidTransform
    board_pose_camera: RigidTransform
    hole_centers_lidar: np.ndarray   # (4, 3)
    hole_centers_camera: np.ndarray  # (4, 3)

    def __post_init__(self):
        expected_cam_pose = self.T_CL_true.compose(self.board_pose_lidar)
        if np.abs(expected_cam_pose.matrix4 - self.board_pose_camera.matrix4).max() > 1e-12:
            raise ValidationError("ground truth: camera board pose != T_CL * lidar board pose")
        hl = np.asarray(self.hole_centers_lidar, dtype=np.float64)
        hc = np.asarray(self.hole_centers_camera, dtype=np.float64)
        if hl.shape != (4, 3) or hc.shape != (4, 3):
            raise ValidationError("ground truth: hole center sets must be (4, 3)")
        if np.abs(self.T_CL_true.apply(hl) - hc).max() > 1e-12:
            raise ValidationError("ground truth: camera hole centers != T_CL * lidar hole centers")
        object.__setattr__(self, "hole_centers_lidar", hl)
        object.__setattr__(self, "hole_centers_camera", hc)


@dataclass(frozen=True)
class PoseSampler:
    """Board placement envelope in the LiDAR frame (meters / degrees)."""

    distance_range: tuple[float, float] = (1.15, 1.45)
    lateral_range: tuple[float, float] = (-0.05, 0.05)
    height_range: tuple[float, float] = (-0.04, 0.04)
    tilt_max_deg: float = 12.0
    roll_max_deg: float = 8.0


def board_half_extents(target: TargetGeometry, margin: float = 0.033) -> tuple[float, float]:
    """Physical board rectangle inferred from holes and markers plus margin."""
    hx = (np.abs(target.hole_centers_board[:, 0]) + target.hole_radius).max()
    hy = (np.abs(target.hole_centers_board[:, 1]) + target.hole_radius).max()
    for m in target.markers:
        corners = marker_corners_board(m)
        hx = max(hx, np.abs(corners[:, 0]).max())
        hy = max(hy, np.abs(corners[:, 1]).max())
    return float(hx + margin), float(hy + margin)


def _canonical_board_rotation() -> np.ndarray:
    # board +x -> lidar -y, +y -> lidar +z, +z (normal) -> lidar -x
    return np.array([
        [0.0, 0.0, -1.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
    ])


def sample_board_pose(rng: np.random.Generator, sampler: PoseSampler) -> RigidTransform:
    """Random board pose facing the LiDAR within the sampler envelope."""
    x = rng.uniform(*sampler.distance_range)
    y = rng.uniform(*sampler.lateral_range)
    z = rng.uniform(*sampler.height_range)
    tilt = math.radians(sampler.tilt_max_deg)
    roll = math.radians(sampler.roll_max_deg)
    yaw = rng.uniform(-tilt, tilt)
    pitch = rng.uniform(-tilt, tilt)
    spin = rng.uniform(-roll, roll)
    r = (
        rotation_about_axis([0, 0, 1], yaw)
        @ rotation_about_axis([0, 1, 0], pitch)
        @ _canonical_board_rotation()
        @ rotation_about_axis([0, 0, 1], spin)
    )
    return RigidTransform(r, np.array([x, y, z]))


def _board_corner_dirs(board_pose: RigidTransform, hx: float, hy: float) -> np.ndarray:
    corners_board = np.array([
        [-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0],
    ])
    return board_pose.apply(corners_board)


def _fov_window(pattern: ScanPattern, corner_pts: np.ndarray, margin_deg: float = 0.5):
    """(az_lo, az_hi, el_lo, el_hi) radians; explicit spans are centered on
    the forward axis, otherwise fitted around the board corners."""
    az = np.arctan2(corner_pts[:, 1], corner_pts[:, 0])
    el = np.arctan2(corner_pts[:, 2], np.hypot(corner_pts[:, 0], corner_pts[:, 1]))
    m = math.radians(margin_deg)
    if pattern.azimuth_span_deg is not None and pattern.elevation_span_deg is not None:
        half_az = math.radians(pattern.azimuth_span_deg) / 2.0
        half_el = math.radians(pattern.elevation_span_deg) / 2.0
        if az.min() < -half_az or az.max() > half_az or el.min() < -half_el or el.max() > half_el:
            raise NoVisibilityError(
                "board extends outside the configured scan window "
                f"(az [{math.degrees(az.min()):.1f}, {math.degrees(az.max()):.1f}] deg, "
                f"el [{math.degrees(el.min()):.1f}, {math.degrees(el.max()):.1f}] deg)"
            )
        return -half_az, half_az, -half_el, half_el
    return az.min() - m, az.max() + m, el.min() - m, el.max() + m


def _pattern_directions(pattern: ScanPattern, window, rng: np.random.Generator) -> np.ndarray:
    az_lo, az_hi, el_lo, el_hi = window
    if pattern.kind == "uniform_random":
        az = rng.uniform(az_lo, az_hi, pattern.n_samples)
        el = rng.uniform(el_lo, el_hi, pattern.n_samples)
    elif pattern.kind == "mechanical_rings":
        step = math.radians(pattern.angular_resolution_deg)
        n_az = max(2, int(math.ceil((az_hi - az_lo) / step)) + 1)
        az_line = np.linspace(az_lo, az_hi, n_az)
        ring_span = el_hi - el_lo
        spacing = ring_span / pattern.n_rings
        az_list, el_list = [], []
        for sweep in range(pattern.n_sweeps):
            # stratified sub-ring offsets emulate pitch-rocking accumulation
            offset = (sweep + 0.5) / pattern.n_sweeps * spacing
            rings = el_lo + offset + spacing * np.arange(pattern.n_rings)
            ea, aa = np.meshgrid(rings, az_line, indexing="ij")
            az_list.append(aa.ravel())
            el_list.append(ea.ravel())
        az = np.concatenate(az_list)
        el = np.concatenate(el_list)
    elif pattern.kind == "rosette":
        t = np.arange(pattern.n_samples, dtype=np.float64) / pattern.n_samples
        f1, f2 = pattern.petal_rates
        az_c = 0.5 * (az_lo + az_hi)
        el_c = 0.5 * (el_lo + el_hi)
        amp_az = 0.5 * (az_hi - az_lo) * pattern.amplitude_scale
        amp_el = 0.5 * (el_hi - el_lo) * pattern.amplitude_scale
        radial = np.cos(2.0 * np.pi * f1 * t)
        az = az_c + amp_az * radial * np.cos(2.0 * np.pi * f2 * t)
        el = el_c + amp_el * radial * np.sin(2.0 * np.pi * f2 * t)
    else:  # pragma: no cover
        raise ValidationError(f"unknown pattern kind {pattern.kind!r}")
    cos_el = np.cos(el)
    return np.column_stack([cos_el * np.cos(az), cos_el * np.sin(az), np.sin(el)])


def simulate_lidar_scan(
    target: TargetGeometry,
    board_pose_lidar: RigidTransform,
    pattern: ScanPattern,
    noise: SensorNoise,
    seed: int = 0,
    *,
    board_margin: float = 0.033,
    background_offset: float | None = 1.5,
    background_scale: float = 2.5,
) -> PointCloud:
    """Cast one scan against the posed board; returns points in ray order.

    Rays through a hole disc produce no board return except within
    dilation_depth inside the boundary, where spot spread still yields a
    board-plane return. Optional clutter: a larger plane background_offset
    behind the board.
    """
    hx, hy = board_half_extents(target, board_margin)
    corners = _board_corner_dirs(board_pose_lidar, hx, hy)
    if np.any(corners[:, 0] <= 0.05):
        raise NoVisibilityError("board is behind or too close to the sensor")
    normal = board_pose_lidar.rotation[:, 2]
    center = board_pose_lidar.translation
    if normal @ center >= 0:
        raise NoVisibilityError("board is back-facing (normal points away from the sensor)")

    window = _fov_window(pattern, corners)
    rng = np.random.default_rng(seed)
    dirs = _pattern_directions(pattern, window, rng)
    n = len(dirs)

    d_plane = -(normal @ center)
    denom = dirs @ normal
    t_board = np.full(n, np.nan)
    ok = np.abs(denom) > 1e-12
    t_board[ok] = -d_plane / denom[ok]
    t_board[t_board <= 0] = np.nan

    hits = dirs * t_board[:, None]
    rel = hits - center
    qx = rel @ board_pose_lidar.rotation[:, 0]
    qy = rel @ board_pose_lidar.rotation[:, 1]
    on_board = np.isfinite(t_board) & (np.abs(qx) <= hx) & (np.abs(qy) <= hy)

    holes2 = target.hole_centers_board[:, :2]
    q2 = np.column_stack([qx, qy])
    dist_to_hole = np.linalg.norm(q2[:, None, :] - holes2[None, :, :], axis=2).min(axis=1)
    pass_through = dist_to_hole < (target.hole_radius - noise.dilation_depth)
    board_return = on_board & ~pass_through

    t_ret = np.where(board_return, t_board, np.nan)

    if background_offset is not None:
        bg_center = center - normal * background_offset
        d_bg = -(normal @ bg_center)
        t_bg = np.full(n, np.nan)
        t_bg[ok] = -d_bg / denom[ok]
        t_bg[t_bg <= 0] = np.nan
        bg_hits = dirs * t_bg[:, None]
        bg_rel = bg_hits - bg_center
        bx = bg_rel @ board_pose_lidar.rotation[:, 0]
        by = bg_rel @ board_pose_lidar.rotation[:, 1]
        on_bg = (
            np.isfinite(t_bg)
            & (np.abs(bx) <= hx * background_scale)
            & (np.abs(by) <= hy * background_scale)
            & ~board_return
        )
        t_ret = np.where(on_bg, t_bg, t_ret)

    if noise.range_sigma > 0:
        eps = rng.normal(0.0, noise.range_sigma, n)
        np.clip(eps, -6.0 * noise.range_sigma, 6.0 * noise.range_sigma, out=eps)
        t_ret = t_ret + eps
    if noise.dropout_prob > 0:
        drop = rng.random(n) < noise.dropout_prob
        t_ret[drop] = np.nan

    keep = np.isfinite(t_ret)
    return PointCloud(dirs[keep] * t_ret[keep, None])


def simulate_marker_detections(
    target: TargetGeometry,
    board_pose_camera: RigidTransform,
    intr: CameraIntrinsics,
    corner_noise_px: float = 0.0,
    seed: int = 0,
    image_size: tuple[int, int] = (1280, 1024),
) -> list[MarkerDetection]:
    """Forward-project every marker's corners; Gaussian pixel noise added."""
    w, h = image_size
    rng = np.random.default_rng(seed)
    out = []
    for m in target.markers:
        cam = board_pose_camera.apply(marker_corners_board(m))
        if np.any(cam[:, 2] <= 0):
            raise OutOfViewError(f"marker {m.id}: corner behind the camera")
        px = project_points(cam, intr)
        if np.any(px[:, 0] < 0) or np.any(px[:, 0] >= w) or np.any(px[:, 1] < 0) or np.any(px[:, 1] >= h):
            raise OutOfViewError(f"marker {m.id}: corner projects outside the {w}x{h} image")
        if corner_noise_px > 0:
            px = px + rng.normal(0.0, corner_noise_px, px.shape)
        out.append(MarkerDetection(id=m.id, corners_px=px))
    return out


def make_ground_truth(
    target: TargetGeometry,
    t_cl_true: RigidTransform,
    board_pose_lidar: RigidTransform,
) -> GroundTruth:
    board_pose_camera = t_cl_true.compose(board_pose_lidar)
    centers_lidar = board_pose_lidar.apply(target.hole_centers_board)
    centers_camera = t_cl_true.apply(centers_lidar)
    return GroundTruth(
        T_CL_true=t_cl_true,
        board_pose_lidar=board_pose_lidar,
        board_pose_camera=board_pose_camera,
        hole_centers_lidar=centers_lidar,
        hole_centers_camera=centers_camera,
    )


def ground_truth_to_dict(gt: GroundTruth) -> dict:
    return {
        "T_CL_true": transform_to_dict(gt.T_CL_true),
        "board_pose_lidar": transform_to_dict(gt.board_pose_lidar),
        "board_pose_camera": transform_to_dict(gt.board_pose_camera),
        "hole_centers_lidar": [list(map(float, c)) for c in gt.hole_centers_lidar],
        "hole_centers_camera": [list(map(float, c)) for c in gt.hole_centers_camera],
    }


def ground_truth_from_dict(d: dict) -> GroundTruth:
    return GroundTruth(
        T_CL_true=transform_from_dict(d["T_CL_true"]),
        board_pose_lidar=transform_from_dict(d["board_pose_lidar"]),
        board_pose_camera=transform_from_dict(d["board_pose_camera"]),
        hole_centers_lidar=np.asarray(d["hole_centers_lidar"], dtype=np.float64),
        hole_centers_camera=np.asarray(d["hole_centers_camera"], dtype=np.float64),
    )


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _write_atomic(path, (json.dumps(obj, indent=2) + "\n").encode("ascii"))


def generate_scene_set(
    out_dir,
    target: TargetGeometry,
    intr: CameraIntrinsics,
    t_cl_true: RigidTransform,
    n_scenes: int = 4,
    pattern: ScanPattern = ScanPattern(),
    noise: SensorNoise = SensorNoise(),
    sampler: PoseSampler = PoseSampler(),
    corner_noise_px: float = 0.0,
    image_size: tuple[int, int] = (1280, 1024),
    seed: int = 1,
    background_offset: float | None = 1.5,
    board_margin: float = 0.033,
    ascii_pcd: bool = False,
    max_retries: int = 50,
) -> dict:
    """Emit n_scenes (cloud, detections, ground truth) triples + manifest.

    Byte-identical for identical arguments. Returns the manifest dict.
    """
    if n_scenes < 1:
        raise ValidationError("generate_scene_set: n_scenes must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seed_seq = np.random.SeedSequence(seed)
    scene_seeds = seed_seq.spawn(n_scenes)

    scenes = []
    all_corners = []
    for k in range(n_scenes):
        rng = np.random.default_rng(scene_seeds[k])
        scan_seed, det_seed = [int(s) for s in rng.integers(0, 2**31 - 1, 2)]
        cloud = None
        for _ in range(max_retries):
            pose_l = sample_board_pose(rng, sampler)
            pose_c = t_cl_true.compose(pose_l)
            try:
                cloud = simulate_lidar_scan(
                    target, pose_l, pattern, noise, seed=scan_seed,
                    board_margin=board_margin, background_offset=background_offset,
                )
                detections = simulate_marker_detections(
                    target, pose_c, intr, corner_noise_px, seed=det_seed,
                    image_size=image_size,
                )
                break
            except (NoVisibilityError, OutOfViewError):
                cloud = None
        if cloud is None:
            raise PoseSamplingExhaustedError(
                f"scene {k}: no visible board pose within {max_retries} draws"
            )
        gt = make_ground_truth(target, t_cl_true, pose_l)
        sid = f"scene_{k:03d}"
        cloud_file = f"{sid}.pcd"
        det_file = f"{sid}_detections.json"
        gt_file = f"{sid}_truth.json"
        save_pcd(out / cloud_file, cloud, binary=not ascii_pcd)
        _write_json(out / det_file, detections_to_dict(detections, image_size))
        _write_json(out / gt_file, ground_truth_to_dict(gt))
        scenes.append({
            "id": sid,
            "cloud": cloud_file,
            "detections": det_file,
            "ground_truth": gt_file,
        })
        hx, hy = board_half_extents(target, board_margin)
        all_corners.append(_board_corner_dirs(pose_l, hx, hy))

    corners = np.vstack(all_corners)
    margin = 0.12
    roi = {
        "x_min": float(corners[:, 0].min() - margin),
        "x_max": float(corners[:, 0].max() + margin),
        "y_min": float(corners[:, 1].min() - margin),
        "y_max": float(corners[:, 1].max() + margin),
        "z_min": float(corners[:, 2].min() - margin),
        "z_max": float(corners[:, 2].max() + margin),
    }

    _write_json(out / "target.json", target_to_dict(target))
    _write_json(out / "intrinsics.json", intrinsics_to_dict(intr))
    manifest = {
        "t_cl_true": transform_to_dict(t_cl_true),
        "target": "target.json",
        "intrinsics": "intrinsics.json",
        "image_size": [int(image_size[0]), int(image_size[1])],
        "suggested_roi": roi,
        "scenes": scenes,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest
