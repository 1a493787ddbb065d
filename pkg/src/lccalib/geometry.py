"""Core 3D types: points, point clouds, rigid transforms, quaternions.

All lengths are meters, all angles radians. Rotations are stored as 3x3
matrices; quaternions (w, x, y, z) appear only at averaging and
serialization boundaries. Every type is an immutable value and every
operation is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ORTHO_TOL = 1e-9


def as_point3(p) -> np.ndarray:
    """Validate and convert to a finite float64 (3,) vector."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValidationError(f"point: expected shape (3,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("point: components must be finite")
    return a


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points with optional per-point intensity."""

    points: np.ndarray                      # (N, 3) float64
    intensity: np.ndarray | None = None     # (N,) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"points: expected (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points: all components must be finite")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64)
            if inten.shape != (len(pts),):
                raise ValidationError(
                    f"intensity: expected ({len(pts)},), got {inten.shape}"
                )
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class RigidTransform:
    """Rigid motion p -> R @ p + t."""

    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if R.shape != (3, 3):
            raise ValidationError(f"rotation: expected (3, 3), got {R.shape}")
        if t.shape != (3,):
            raise ValidationError(f"translation: expected (3,), got {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValidationError("transform entries must be finite")
        if np.abs(R @ R.T - np.eye(3)).max() > ORTHO_TOL:
            raise ValidationError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValidationError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix4(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or a batch (N, 3)."""
        p = np.asarray(p, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Returns T with T(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)


def transform_apply(T: RigidTransform, p) -> np.ndarray:
    return T.apply(np.asarray(p, dtype=np.float64))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(T: RigidTransform) -> RigidTransform:
    return T.inverse()


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a rotation of `angle` about `axis`."""
    u = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(u)
    if n == 0:
        raise ValidationError("axis: zero vector")
    u = u / n
    K = np.array([
        [0.0, -u[2], u[1]],
        [u[2], 0.0, -u[0]],
        [-u[1], u[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def quat_from_rotation(R) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), canonicalized to w >= 0.

    Shepperd's method: pick the largest of the four squared components for
    numerical stability.
    """
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    cand = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    case = int(np.argmax(cand))
    if case == 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    elif case == 1:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
        ])
    elif case == 2:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([
            (R[0, 2] - R[2, 0]) / s,
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
        ])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([
            (R[1, 0] - R[0, 1]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
        ])
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def rotation_from_quat(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) -> rotation matrix."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValidationError(f"quaternion: expected shape (4,), got {q.shape}")
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        raise ValidationError("quaternion: must be unit norm")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_angle(R) -> float:
    """Geodesic angle (radians) of a rotation matrix."""
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
