"""Camera-side hole recovery from fiducial marker corner detections.

Marker corner pixels and ids are ingested from files (image decoding is a
user-side step). Each marker yields an estimate of the same board pose via
planar PnP in the board frame; the estimates are averaged and the known
hole layout is projected into the camera frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateConfigurationError,
    InconsistentPosesError,
    NoConvergenceError,
    NoKnownMarkersError,
    ParseError,
    ValidationError,
)
from .geometry import RigidTransform, quat_from_rotation, rotation_from_quat
from .target import CameraIntrinsics, TargetGeometry, hole_centers_in_frame, marker_corners_board


@dataclass(frozen=True)
class MarkerDetection:
    """Detected marker: id plus pixel corners in TL, TR, BR, BL order."""

    id: int
    corners_px: np.ndarray  # (4, 2)

    def __post_init__(self):
        c = np.asarray(self.corners_px, dtype=np.float64)
        if c.shape != (4, 2):
            raise ValidationError(f"marker {self.id}: expected 4 corners, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError(f"marker {self.id}: corners must be finite")
        object.__setattr__(self, "corners_px", c)


@dataclass(frozen=True)
class BoardPose:
    """Board-frame -> camera-frame pose with reprojection quality."""

    T_cam_board: RigidTransform
    reproj_rms: float  # pixels

    def __post_init__(self):
        if not self.T_cam_board.translation[2] > 0:
            raise ValidationError("board pose: board origin must be in front of the camera")


def load_detections(path) -> list[MarkerDetection]:
    """Parse the detections JSON schema and validate each marker."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"detections {path}: invalid JSON ({e})") from e
    if not isinstance(d, dict) or "markers" not in d:
        raise ParseError(f"detections {path}: missing 'markers' key")
    out = []
    for m in d["markers"]:
        try:
            marker_id = int(m["id"])
            corners = np.asarray(m["corners"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"detections {path}: malformed marker entry ({e})") from e
        if corners.shape != (4, 2):
            raise ValidationError(
                f"detections {path}: marker {marker_id} has corner shape {corners.shape}, expected (4, 2)"
            )
        out.append(MarkerDetection(id=marker_id, corners_px=corners))
    return out


def detections_to_dict(detections: list[MarkerDetection], image_size: tuple[int, int]) -> dict:
    return {
        "image_size": [int(image_size[0]), int(image_size[1])],
        "markers": [
            {"id": d.id, "corners": [[float(u), float(v)] for u, v in d.corners_px]}
            for d in detections
        ],
    }


def distort_normalized(xy: np.ndarray, distortion: np.ndarray) -> np.ndarray:
    """Forward radial-tangential model on normalized image coordinates."""
    xy = np.asarray(xy, dtype=np.float64)
    single = xy.ndim == 1
    xy = np.atleast_2d(xy)
    k1, k2, p1, p2, k3 = distortion
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    out = np.column_stack([xd, yd])
    return out[0] if single else out


def project_points(pts_cam: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame 3D points to pixels (distortion applied).

    Points at or behind the camera plane project to NaN.
    """
    pts = np.atleast_2d(np.asarray(pts_cam, dtype=np.float64))
    z = pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xy = pts[:, :2] / z[:, None]
    xy[z <= 1e-12] = np.nan
    d = distort_normalized(xy, intr.distortion)
    px = np.column_stack([intr.fx * d[:, 0] + intr.cx, intr.fy * d[:, 1] + intr.cy])
    if np.asarray(pts_cam).ndim == 1:
        return px[0]
    return px


def undistort_point(
    p_px,
    intr: CameraIntrinsics,
    max_iters: int = 50,
    tol_px: float = 1e-6,
) -> np.ndarray:
    """Pixel -> normalized coordinates, inverting the distortion iteratively."""
    p = np.asarray(p_px, dtype=np.float64)
    xd = np.array([(p[0] - intr.cx) / intr.fx, (p[1] - intr.cy) / intr.fy])
    k1, k2, p1, p2, k3 = intr.distortion
    x, y = xd
    for _ in range(max_iters):
        r2 = x * x + y * y
        radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x = (xd[0] - dx) / radial
        y = (xd[1] - dy) / radial
    back = distort_normalized(np.array([x, y]), intr.distortion)
    err = math.hypot((back[0] - xd[0]) * intr.fx, (back[1] - xd[1]) * intr.fy)
    if not np.isfinite(err) or err > tol_px:
        raise NoConvergenceError(
            f"undistort_point: {err:.3g} px residual after {max_iters} iterations"
        )
    return np.array([x, y])


def _undistort_points(pts_px: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    return np.array([undistort_point(p, intr) for p in np.atleast_2d(pts_px)])


def _dlt_homography(obj2: np.ndarray, img2: np.ndarray) -> np.ndarray:
    """Homography obj2 -> img2 via the normalized DLT."""

    def normalizer(pts):
        c = pts.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-12)
        t = np.array([
            [scale, 0.0, -scale * c[0]],
            [0.0, scale, -scale * c[1]],
            [0.0, 0.0, 1.0],
        ])
        return t

    ta = normalizer(obj2)
    tb = normalizer(img2)
    a = np.column_stack([obj2, np.ones(len(obj2))]) @ ta.T
    b = np.column_stack([img2, np.ones(len(img2))]) @ tb.T

    rows = []
    for (x, y, w), (u, v, ww) in zip(a, b):
        rows.append([0, 0, 0, -ww * x, -ww * y, -ww * w, v * x, v * y, v * w])
        rows.append([ww * x, ww * y, ww * w, 0, 0, 0, -u * x, -u * y, -u * w])
    m = np.asarray(rows)
    _, _, vt = np.linalg.svd(m)
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tb) @ h @ ta
    if abs(h[2, 2]) < 1e-15:
        raise DegenerateConfigurationError("homography: vanishing scale")
    return h / h[2, 2]


def _planar_pose_candidates(obj2: np.ndarray, img2: np.ndarray):
    """Both rotations consistent with the homography's first-order behavior
    at the object centroid, plus the common translation ray.

    obj2 must be centered (zero mean). Returns a list of (R, t) acting on
    the 2D object plane coordinates.
    """
    h = _dlt_homography(obj2, img2)
    v = h[:2, 2]

    # rotation taking e_z onto the ray through the object origin's image
    s = np.array([v[0], v[1], 1.0])
    s_hat = s / np.linalg.norm(s)
    ez = np.array([0.0, 0.0, 1.0])
    axis = np.cross(ez, s_hat)
    sin_a = np.linalg.norm(axis)
    cos_a = float(ez @ s_hat)
    if sin_a < 1e-14:
        rv = np.eye(3)
    else:
        k = axis / sin_a
        kx = np.array([
            [0.0, -k[2], k[1]],
            [k[2], 0.0, -k[0]],
            [-k[1], k[0], 0.0],
        ])
        rv = np.eye(3) + sin_a * kx + (1.0 - cos_a) * (kx @ kx)

    jac = np.array([
        [h[0, 0] - h[2, 0] * v[0], h[0, 1] - h[2, 1] * v[0]],
        [h[1, 0] - h[2, 0] * v[1], h[1, 1] - h[2, 1] * v[1]],
    ])
    b = rv[:2, :2] - np.outer(v, rv[2, :2])
    try:
        a = np.linalg.solve(b, jac)
    except np.linalg.LinAlgError as e:
        raise DegenerateConfigurationError(f"planar pose: singular projection ({e})") from e

    u_svd, sig, vt_svd = np.linalg.svd(a)
    gamma = sig[0]
    if gamma < 1e-15:
        raise DegenerateConfigurationError("planar pose: zero-scale homography")
    tau = 1.0 / gamma
    c_block = tau * a
    dd = max(0.0, 1.0 - (sig[1] / sig[0]) ** 2 if len(sig) > 1 else 1.0)
    d_dir = vt_svd[-1]
    t_vec = tau * s

    cands = []
    for sign in (1.0, -1.0):
        bottom = sign * math.sqrt(dd) * d_dir
        q = np.vstack([c_block, bottom])          # 3x2, orthonormal columns
        r3 = np.cross(q[:, 0], q[:, 1])
        r_tilde = np.column_stack([q[:, 0], q[:, 1], r3])
        r = rv @ r_tilde
        # polish to a proper rotation
        uu, _, vvt = np.linalg.svd(r)
        r = uu @ vvt
        if np.linalg.det(r) < 0:
            uu[:, -1] = -uu[:, -1]
            r = uu @ vvt
        cands.append((r, t_vec.copy()))
        if dd == 0.0:
            break  # both signs coincide
    return cands


def solve_planar_pnp(
    corners_px: np.ndarray,
    corners_board: np.ndarray,
    intr: CameraIntrinsics,
) -> BoardPose:
    """Pose of a planar point set from its pixel projections.

    Corners are undistorted first; both planar pose candidates are scored
    by full-model pixel reprojection RMS and the better one with positive
    depth wins.
    """
    px = np.asarray(corners_px, dtype=np.float64)
    obj = np.asarray(corners_board, dtype=np.float64)
    if px.shape[0] != obj.shape[0] or px.shape[0] < 4:
        raise DegenerateConfigurationError(
            f"solve_planar_pnp: need >= 4 matched corners, got {px.shape[0]} px / {obj.shape[0]} obj"
        )

    c3 = obj.mean(axis=0)
    centered = obj - c3
    # plane basis: for z = 0 layouts this is the identity embedding
    if np.abs(centered[:, 2]).max() < 1e-12:
        basis = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        normal = np.array([0.0, 0.0, 1.0])
    else:
        _, _, vt = np.linalg.svd(centered)
        basis = vt[:2].T
        normal = np.cross(basis[:, 0], basis[:, 1])
    obj2 = centered @ basis
    s = np.linalg.svd(obj2 - obj2.mean(axis=0), compute_uv=False)
    if s[1] <= 1e-9 * max(1.0, s[0]):
        raise DegenerateConfigurationError("solve_planar_pnp: object corners are collinear")

    img2 = _undistort_points(px, intr)
    best = None
    for r_u, t_u in _planar_pose_candidates(obj2, img2):
        r_full = r_u[:, :2] @ basis.T + np.outer(r_u[:, 2], normal)
        uu, _, vvt = np.linalg.svd(r_full)
        r_full = uu @ vvt
        if np.linalg.det(r_full) < 0:
            uu[:, -1] = -uu[:, -1]
            r_full = uu @ vvt
        t_full = t_u - r_full @ c3
        if t_full[2] <= 0:
            continue
        cam_pts = obj @ r_full.T + t_full
        if np.any(cam_pts[:, 2] <= 1e-9):
            continue
        proj = project_points(cam_pts, intr)
        rms = float(np.sqrt(((proj - px) ** 2).sum(axis=1).mean()))
        if best is None or rms < best[0]:
            best = (rms, r_full, t_full)
    if best is None:
        raise BehindCameraError("solve_planar_pnp: no candidate pose with positive depth")
    rms, r_full, t_full = best
    return BoardPose(RigidTransform(r_full, t_full), rms)


def average_poses(poses: list[BoardPose], max_spread_deg: float = 30.0) -> BoardPose:
    """Mean translation and eigenvector-based quaternion-mean rotation."""
    if not poses:
        raise ValidationError("average_poses: need at least one pose")
    quats = np.array([quat_from_rotation(p.T_cam_board.rotation) for p in poses])
    # rotation spread guard against flipped planar solutions
    for i in range(len(poses)):
        for j in range(i + 1, len(poses)):
            dot = abs(float(quats[i] @ quats[j]))
            ang = 2.0 * math.degrees(math.acos(min(1.0, dot)))
            if ang > max_spread_deg:
                raise InconsistentPosesError(
                    f"average_poses: poses {i} and {j} differ by {ang:.1f} deg "
                    f"(> {max_spread_deg} deg); suspect a flipped planar solution"
                )
    # sign-align to the first, then take the dominant eigenvector of the
    # accumulated outer products (sign-invariant by construction)
    aligned = quats * np.where(quats @ quats[0] < 0, -1.0, 1.0)[:, None]
    m = sum(np.outer(q, q) for q in aligned)
    w, v = np.linalg.eigh(m)
    q_mean = v[:, -1]
    if q_mean[0] < 0:
        q_mean = -q_mean
    rot = rotation_from_quat(q_mean / np.linalg.norm(q_mean))
    t_mean = np.mean([p.T_cam_board.translation for p in poses], axis=0)
    rms = float(np.sqrt(np.mean([p.reproj_rms ** 2 for p in poses])))
    return BoardPose(RigidTransform(rot, t_mean), rms)


def camera_hole_centers(
    detections: list[MarkerDetection],
    target: TargetGeometry,
    intr: CameraIntrinsics,
) -> np.ndarray:
    """Hole centers (4, 3) in the camera frame, canonical target order."""
    poses = []
    for det in detections:
        marker = target.marker_by_id(det.id)
        if marker is None:
            continue
        corners_board = marker_corners_board(marker)
        poses.append(solve_planar_pnp(det.corners_px, corners_board, intr))
    if not poses:
        raise NoKnownMarkersError(
            f"camera_hole_centers: none of {[d.id for d in detections]} match the target markers"
        )
    board_pose = average_poses(poses)
    return hole_centers_in_frame(target, board_pose.T_cam_board)
