"""Target-based LiDAR-camera extrinsic calibration toolkit.

Scan-pattern-agnostic circular-hole extraction from point clouds,
fiducial-based hole localization in the camera frame, closed-form
multi-scene rigid registration, and a synthetic scene simulator with
exact ground truth.
"""

__version__ = "0.1.0"

from .camera import (
    BoardPose,
    MarkerDetection,
    average_poses,
    camera_hole_centers,
    load_detections,
    solve_planar_pnp,
    undistort_point,
)
from .errors import CalibError
from .geometry import (
    PointCloud,
    RigidTransform,
    compose,
    invert,
    quat_from_rotation,
    rotation_from_quat,
    transform_apply,
)
from .lidar import (
    EllipseFit,
    ExtractionParams,
    HoleDetection,
    Plane,
    RoiBounds,
    align_plane_to_z0,
    ellipse_center,
    euclidean_cluster,
    extract_edge_points,
    extract_hole_centers,
    fit_ellipse_direct,
    order_hole_centers,
    passthrough_filter,
    ransac_plane,
    validate_hole,
    voxel_downsample,
)
from .pcd import load_pcd, save_pcd
from .registration import (
    CalibrationResult,
    CalibrationScene,
    evaluate_residual,
    joint_calibrate,
    kabsch,
)
from .simulator import (
    GroundTruth,
    PoseSampler,
    ScanPattern,
    SensorNoise,
    generate_scene_set,
    simulate_lidar_scan,
    simulate_marker_detections,
)
from .target import (
    CameraIntrinsics,
    MarkerSpec,
    TargetGeometry,
    hole_centers_in_frame,
    load_target_config,
    marker_corners_board,
)

__all__ = [
    "BoardPose",
    "CalibError",
    "CalibrationResult",
    "CalibrationScene",
    "CameraIntrinsics",
    "EllipseFit",
    "ExtractionParams",
    "GroundTruth",
    "HoleDetection",
    "MarkerDetection",
    "MarkerSpec",
    "Plane",
    "PointCloud",
    "PoseSampler",
    "RigidTransform",
    "RoiBounds",
    "ScanPattern",
    "SensorNoise",
    "TargetGeometry",
    "align_plane_to_z0",
    "average_poses",
    "camera_hole_centers",
    "compose",
    "ellipse_center",
    "euclidean_cluster",
    "evaluate_residual",
    "extract_edge_points",
    "extract_hole_centers",
    "fit_ellipse_direct",
    "generate_scene_set",
    "hole_centers_in_frame",
    "invert",
    "joint_calibrate",
    "kabsch",
    "load_detections",
    "load_pcd",
    "load_target_config",
    "marker_corners_board",
    "order_hole_centers",
    "passthrough_filter",
    "quat_from_rotation",
    "ransac_plane",
    "rotation_from_quat",
    "save_pcd",
    "simulate_lidar_scan",
    "simulate_marker_detections",
    "solve_planar_pnp",
    "transform_apply",
    "undistort_point",
    "validate_hole",
    "voxel_downsample",
]
