"""LiDAR-side hole extraction: ROI crop, RANSAC plane, plane flattening,
voxel downsampling, angular-gap edge detection, clustering, direct ellipse
fitting, validation and lifting of the four hole centers back to 3D.

Every operation is a pure function of its inputs; RANSAC randomness is an
explicit seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    AmbiguousOrderError,
    DegenerateConicError,
    DegenerateInputError,
    EmptyRoiError,
    FitError,
    HoleCountError,
    NoPlaneError,
    ValidationError,
)
from .geometry import PointCloud, RigidTransform
from .target import TargetGeometry

try:
    import os

    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class RoiBounds:
    """Axis-aligned crop box for the pass-through filter."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        for axis in "xyz":
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not lo < hi:
                raise ValidationError(f"roi: {axis}_min must be < {axis}_max")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return (
            (pts[:, 0] >= self.x_min) & (pts[:, 0] <= self.x_max)
            & (pts[:, 1] >= self.y_min) & (pts[:, 1] <= self.y_max)
            & (pts[:, 2] >= self.z_min) & (pts[:, 2] <= self.z_max)
        )


@dataclass(frozen=True)
class Plane:
    """Plane n . p + d = 0 with unit normal."""

    normal: np.ndarray  # (3,)
    d: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if n.shape != (3,) or not np.all(np.isfinite(n)):
            raise ValidationError("plane: normal must be a finite 3-vector")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValidationError("plane: normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "d", float(self.d))

    def distance(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.normal + self.d


@dataclass(frozen=True)
class EllipseFit:
    """General conic Ax^2+Bxy+Cy^2+Dx+Ey+F=0 constrained to an ellipse."""

    conic: np.ndarray       # (6,) (A, B, C, D, E, F), normalized 4AC - B^2 = 1
    center: np.ndarray      # (2,)
    semi_major: float
    semi_minor: float
    eccentricity: float
    support_count: int

    def __post_init__(self):
        conic = np.asarray(self.conic, dtype=np.float64)
        A, B, C = conic[:3]
        if not B * B - 4 * A * C < 0:
            raise ValidationError("ellipse: B^2 - 4AC must be negative")
        if not (self.semi_major >= self.semi_minor > 0):
            raise ValidationError("ellipse: axes must satisfy a >= b > 0")
        ecc = math.sqrt(max(0.0, 1.0 - (self.semi_minor / self.semi_major) ** 2))
        if abs(ecc - self.eccentricity) > 1e-9:
            raise ValidationError("ellipse: eccentricity inconsistent with axes")
        object.__setattr__(self, "conic", conic)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))


@dataclass(frozen=True)
class HoleDetection:
    """One validated circular hole, lifted back to the LiDAR frame."""

    center_3d: np.ndarray   # (3,)
    ellipse: EllipseFit
    correspondence_index: int


@dataclass(frozen=True)
class ExtractionParams:
    """Thresholds for the full extraction chain. Defaults are the published
    operating point (0.01 m RANSAC, 8 mm voxels, 0.03 m / 25 deg edge test,
    4 cm axis tolerance)."""

    ransac_inlier_m: float = 0.01
    voxel_leaf_m: float = 0.008
    edge_radius_m: float = 0.03
    edge_gap_deg: float = 25.0
    axis_tol_m: float = 0.04
    ecc_max: float = 0.6
    cluster_tol_m: float = 0.02
    cluster_min: int = 15
    ransac_iters: int = 1000
    seed: int = 0
    min_inlier_ratio: float = 0.2


def passthrough_filter(cloud: PointCloud, roi: RoiBounds) -> PointCloud:
    """Keep exactly the points inside the box; order preserved."""
    mask = roi.contains(cloud.points)
    if not mask.any():
        raise EmptyRoiError("pass-through filter removed every point; check the ROI box")
    intensity = cloud.intensity[mask] if cloud.intensity is not None else None
    return PointCloud(cloud.points[mask], intensity)


def _collinear(pts: np.ndarray, tol: float = 1e-12) -> bool:
    c = pts - pts.mean(axis=0)
    # second singular value ~ 0 means all points on one line
    s = np.linalg.svd(c, compute_uv=False)
    return len(s) < 2 or s[1] <= tol * max(1.0, s[0])


def ransac_plane(
    cloud: PointCloud,
    inlier_threshold: float = 0.01,
    max_iters: int = 1000,
    seed: int = 0,
    min_inlier_ratio: float = 0.2,
) -> tuple[Plane, PointCloud]:
    """Largest-inlier-count plane from random 3-point hypotheses.

    Deterministic for a fixed seed. Early exit once a hypothesis explains
    more than 90% of the cloud. The winning hypothesis is refined by a PCA
    fit to its inliers whenever that does not lose inliers.
    """
    pts = cloud.points
    n = len(pts)
    if n < 3:
        raise DegenerateInputError(f"ransac_plane: need >= 3 points, got {n}")
    if _collinear(pts):
        raise DegenerateInputError("ransac_plane: points are collinear")

    rng = np.random.default_rng(seed)
    best_count = -1
    best_normal = None
    best_d = 0.0

    chunk = 32
    done = 0
    while done < max_iters:
        m = min(chunk, max_iters - done)
        idx = rng.integers(0, n, size=(m, 3))
        p1, p2, p3 = pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]]
        normals = np.cross(p2 - p1, p3 - p1)
        norms = np.linalg.norm(normals, axis=1)
        ok = norms > 1e-12
        if ok.any():
            normals = normals[ok] / norms[ok, None]
            ds = -np.einsum("ij,ij->i", normals, p1[ok])
            dist = np.abs(pts @ normals.T + ds)          # (n, m_ok)
            counts = (dist <= inlier_threshold).sum(axis=0)
            j = int(np.argmax(counts))
            if counts[j] > best_count:
                best_count = int(counts[j])
                best_normal = normals[j]
                best_d = float(ds[j])
        done += m
        if best_count > 0.9 * n:
            break

    if best_normal is None or best_count / n < min_inlier_ratio:
        raise NoPlaneError(
            f"ransac_plane: best inlier ratio {max(best_count, 0) / n:.3f} "
            f"below minimum {min_inlier_ratio}"
        )

    plane = _orient_toward_origin(Plane(best_normal, best_d))
    mask = np.abs(plane.distance(pts)) <= inlier_threshold

    # refine on the winning inliers; keep only if it does not lose support
    refined = _pca_plane(pts[mask])
    if refined is not None:
        refined = _orient_toward_origin(refined)
        rmask = np.abs(refined.distance(pts)) <= inlier_threshold
        if rmask.sum() >= mask.sum():
            plane, mask = refined, rmask

    intensity = cloud.intensity[mask] if cloud.intensity is not None else None
    return plane, PointCloud(pts[mask], intensity)


def _pca_plane(pts: np.ndarray) -> Plane | None:
    if len(pts) < 3:
        return None
    c = pts.mean(axis=0)
    q = pts - c
    cov = q.T @ q
    w, v = np.linalg.eigh(cov)
    normal = v[:, 0]
    nn = np.linalg.norm(normal)
    if nn < 1e-12 or w[1] <= 1e-20:
        return None
    normal = normal / nn
    return Plane(normal, -float(normal @ c))


def _orient_toward_origin(plane: Plane) -> Plane:
    # make the normal point toward the sensor-origin side of the plane
    if plane.d < -1e-12:
        return Plane(-plane.normal, -plane.d)
    if abs(plane.d) <= 1e-12:
        # origin on the plane: canonicalize by the largest component's sign
        n = plane.normal
        k = int(np.argmax(np.abs(n)))
        if n[k] < 0:
            return Plane(-n, -plane.d)
    return plane


def align_plane_to_z0(plane: Plane, inliers: PointCloud) -> tuple[np.ndarray, RigidTransform]:
    """Flatten plane inliers to 2D and return the inverse (lift) transform.

    The in-plane frame is canonical: z along the plane normal oriented
    toward the sensor origin, x along the projection of the sensor x-axis
    onto the plane (y-axis fallback when nearly parallel). lift maps
    (x, y, 0) back to the original frame.
    """
    plane = _orient_toward_origin(plane)
    n = plane.normal
    ex = np.array([1.0, 0.0, 0.0])
    x_axis = ex - (ex @ n) * n
    if np.linalg.norm(x_axis) < 1e-6:
        ey = np.array([0.0, 1.0, 0.0])
        x_axis = ey - (ey @ n) * n
    x_axis = x_axis / np.linalg.norm(x_axis)
    y_axis = np.cross(n, x_axis)
    R = np.column_stack([x_axis, y_axis, n])
    p0 = -plane.d * n
    lift = RigidTransform(R, p0)
    flat = lift.inverse().apply(inliers.points)
    return flat[:, :2], lift


def voxel_downsample(points2d: np.ndarray, leaf: float = 0.008) -> np.ndarray:
    """One centroid per occupied 2D grid cell; output ordered by cell key."""
    if not leaf > 0:
        raise ValidationError("voxel_downsample: leaf must be > 0")
    pts = np.asarray(points2d, dtype=np.float64)
    if len(pts) == 0:
        return pts.reshape(0, 2)
    ij = np.floor(pts / leaf).astype(np.int64)
    key = (ij[:, 0] + (1 << 20)) * (1 << 21) + (ij[:, 1] + (1 << 20))
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    pts_s = pts[order]
    starts = np.flatnonzero(np.r_[True, key_s[1:] != key_s[:-1]])
    sums = np.add.reduceat(pts_s, starts, axis=0)
    counts = np.diff(np.r_[starts, len(key_s)])
    return sums / counts[:, None]


# --- angular-gap edge classification -----------------------------------------
#
# A 2D point is an edge point iff it has at least one neighbor within
# `radius` and the sorted direction angles to its neighbors leave a circular
# gap (including the wrap-around term) larger than the threshold. Points
# with zero neighbors are not edges.

if _HAVE_NUMBA:

    @numba.njit(cache=True, parallel=True)
    def _edge_mask_kernel(pts, cell_of_point, uniq_keys, starts_sorted, order,
                          radius, gap_threshold):
        n = pts.shape[0]
        out = np.zeros(n, dtype=numba.boolean)
        r2 = radius * radius
        two_pi = 2.0 * np.pi
        n_cells = uniq_keys.shape[0]
        for i in numba.prange(n):
            cx = cell_of_point[i, 0]
            cy = cell_of_point[i, 1]
            cand = 0
            for dx in range(-1, 2):
                for dy in range(-1, 2):
                    key = (cx + dx + (1 << 20)) * (1 << 21) + (cy + dy + (1 << 20))
                    lo = np.searchsorted(uniq_keys, key)
                    if lo < n_cells and uniq_keys[lo] == key:
                        cand += starts_sorted[lo + 1] - starts_sorted[lo]
            if cand <= 1:
                continue
            buf = np.empty(cand, dtype=np.float64)
            cnt = 0
            for dx in range(-1, 2):
                for dy in range(-1, 2):
                    key = (cx + dx + (1 << 20)) * (1 << 21) + (cy + dy + (1 << 20))
                    lo = np.searchsorted(uniq_keys, key)
                    if lo >= n_cells or uniq_keys[lo] != key:
                        continue
                    a = starts_sorted[lo]
                    b = starts_sorted[lo + 1]
                    for s in range(a, b):
                        j = order[s]
                        if j == i:
                            continue
                        vx = pts[j, 0] - pts[i, 0]
                        vy = pts[j, 1] - pts[i, 1]
                        if vx * vx + vy * vy <= r2:
                            buf[cnt] = math.atan2(vy, vx)
                            cnt += 1
            if cnt == 0:
                continue
            ang = np.sort(buf[:cnt])
            max_gap = ang[0] + two_pi - ang[cnt - 1]
            for k in range(cnt - 1):
                g = ang[k + 1] - ang[k]
                if g > max_gap:
                    max_gap = g
            if max_gap > gap_threshold:
                out[i] = True
        return out

    def _edge_mask_fast(pts: np.ndarray, radius: float, gap_rad: float) -> np.ndarray:
        ij = np.floor(pts / radius).astype(np.int64)
        key = (ij[:, 0] + (1 << 20)) * (1 << 21) + (ij[:, 1] + (1 << 20))
        order = np.argsort(key, kind="stable")
        key_s = key[order]
        starts = np.flatnonzero(np.r_[True, key_s[1:] != key_s[:-1]])
        uniq_keys = key_s[starts]
        starts_sorted = np.r_[starts, len(key_s)].astype(np.int64)
        return np.asarray(_edge_mask_kernel(
            pts, ij, uniq_keys, starts_sorted, order.astype(np.int64),
            float(radius), float(gap_rad),
        ))

else:  # pragma: no cover
    _edge_mask_fast = None


def _edge_mask_numpy(pts: np.ndarray, radius: float, gap_rad: float) -> np.ndarray:
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    out = np.zeros(len(pts), dtype=bool)
    if len(pairs) == 0:
        return out
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    vec = pts[dst] - pts[src]
    ang = np.arctan2(vec[:, 1], vec[:, 0])
    order = np.lexsort((ang, src))
    src_s, ang_s = src[order], ang[order]
    starts = np.flatnonzero(np.r_[True, src_s[1:] != src_s[:-1]])
    ends = np.r_[starts[1:], len(src_s)] - 1
    nxt = np.empty_like(ang_s)
    nxt[:-1] = ang_s[1:]
    nxt[ends] = ang_s[starts] + 2.0 * np.pi
    gaps = nxt - ang_s
    max_gap = np.maximum.reduceat(gaps, starts)
    out[src_s[starts]] = max_gap > gap_rad
    return out


def edge_point_mask(
    points2d: np.ndarray,
    radius: float = 0.03,
    gap_threshold_deg: float = 25.0,
    engine: str = "auto",
) -> np.ndarray:
    """Boolean mask of edge points under the angular-gap criterion."""
    if not radius > 0:
        raise ValidationError("extract_edge_points: radius must be > 0")
    if not 0.0 < gap_threshold_deg < 360.0:
        raise ValidationError("extract_edge_points: gap threshold must be in (0, 360)")
    pts = np.ascontiguousarray(points2d, dtype=np.float64)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    gap_rad = math.radians(gap_threshold_deg)
    if engine == "auto":
        engine = "grid" if _HAVE_NUMBA else "kdtree"
    if engine == "grid" and _edge_mask_fast is not None:
        return _edge_mask_fast(pts, radius, gap_rad)
    return _edge_mask_numpy(pts, radius, gap_rad)


def extract_edge_points(
    points2d: np.ndarray,
    radius: float = 0.03,
    gap_threshold_deg: float = 25.0,
    engine: str = "auto",
) -> np.ndarray:
    """Subset of points classified as hole/border edges."""
    pts = np.asarray(points2d, dtype=np.float64)
    return pts[edge_point_mask(pts, radius, gap_threshold_deg, engine)]


def euclidean_cluster(
    points2d: np.ndarray,
    tolerance: float,
    min_size: int,
) -> list[np.ndarray]:
    """Connected components of the <=tolerance proximity graph.

    Returns index arrays; components smaller than min_size are dropped.
    """
    if not tolerance > 0:
        raise ValidationError("euclidean_cluster: tolerance must be > 0")
    if min_size < 1:
        raise ValidationError("euclidean_cluster: min_size must be >= 1")
    pts = np.asarray(points2d, dtype=np.float64)
    n = len(pts)
    if n == 0:
        return []
    tree = cKDTree(pts)
    seen = np.zeros(n, dtype=bool)
    clusters = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        frontier = [start]
        members = [start]
        while frontier:
            neighbors = tree.query_ball_point(pts[frontier], tolerance)
            frontier = []
            for lst in neighbors:
                for j in lst:
                    if not seen[j]:
                        seen[j] = True
                        frontier.append(j)
                        members.append(j)
        if len(members) >= min_size:
            clusters.append(np.array(sorted(members), dtype=np.int64))
    return clusters


def fit_ellipse_direct(points2d: np.ndarray) -> EllipseFit:
    """Constrained direct least-squares conic fit (4AC - B^2 = 1).

    Stable partitioned eigen-formulation of the ellipse-constrained
    algebraic fit; input is centered internally for conditioning and the
    coefficients are shifted back afterwards.
    """
    pts = np.asarray(points2d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError(f"fit_ellipse_direct: expected (N, 2), got {pts.shape}")
    if len(pts) < 6:
        raise FitError(f"fit_ellipse_direct: need >= 6 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    x, y = (pts - mean).T

    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as e:
        raise FitError(f"fit_ellipse_direct: degenerate scatter ({e})") from e
    m = s1 + s2 @ t
    m = np.vstack([m[2] / 2.0, -m[1], m[0] / 2.0])
    try:
        eigval, eigvec = np.linalg.eig(m)
    except np.linalg.LinAlgError as e:
        raise FitError(f"fit_ellipse_direct: eigensolve failed ({e})") from e
    if np.abs(eigvec.imag).max() > 1e-8 * max(1.0, np.abs(eigvec.real).max()):
        raise FitError("fit_ellipse_direct: complex eigenvectors, no ellipse solution")
    eigvec = eigvec.real
    cond = 4.0 * eigvec[0] * eigvec[2] - eigvec[1] ** 2
    good = np.flatnonzero(cond > 0)
    if len(good) == 0:
        raise FitError("fit_ellipse_direct: no ellipse-signed eigenvector")
    a1 = eigvec[:, good[0]]
    coeffs_centered = np.concatenate([a1, t @ a1])

    # shift coefficients from centered coords back to the input frame
    A, B, C, Dp, Ep, Fp = coeffs_centered
    mx, my = mean
    D = Dp - 2 * A * mx - B * my
    E = Ep - B * mx - 2 * C * my
    F = Fp + A * mx * mx + B * mx * my + C * my * my - Dp * mx - Ep * my
    conic = np.array([A, B, C, D, E, F])
    disc = 4 * A * C - B * B
    if disc <= 0:
        raise FitError("fit_ellipse_direct: fitted conic is not an ellipse")
    conic = conic / math.sqrt(disc)

    center = ellipse_center(conic)
    a_ax, b_ax = _ellipse_axes(conic)
    ecc = math.sqrt(max(0.0, 1.0 - (b_ax / a_ax) ** 2))
    return EllipseFit(
        conic=conic,
        center=center,
        semi_major=a_ax,
        semi_minor=b_ax,
        eccentricity=ecc,
        support_count=len(pts),
    )


def _ellipse_axes(conic: np.ndarray) -> tuple[float, float]:
    A, B, C, D, E, F = conic
    q = np.array([
        [A, B / 2.0, D / 2.0],
        [B / 2.0, C, E / 2.0],
        [D / 2.0, E / 2.0, F],
    ])
    a33 = q[:2, :2]
    det_q = np.linalg.det(q)
    det33 = np.linalg.det(a33)
    eigvals = np.linalg.eigvalsh(a33)
    with np.errstate(invalid="ignore", divide="ignore"):
        axes_sq = -det_q / (det33 * eigvals)
    if not np.all(np.isfinite(axes_sq)) or np.any(axes_sq <= 0):
        raise FitError("fit_ellipse_direct: degenerate ellipse axes")
    axes = np.sqrt(axes_sq)
    return float(axes.max()), float(axes.min())


def ellipse_center(conic) -> np.ndarray:
    """Analytic conic center: x_c = (2CD - BE) / (B^2 - 4AC),
    y_c = (2AE - BD) / (B^2 - 4AC)."""
    A, B, C, D, E, _ = np.asarray(conic, dtype=np.float64)
    den = B * B - 4.0 * A * C
    scale = max(abs(A), abs(B), abs(C), 1e-300)
    if abs(den) <= 1e-12 * scale * scale:
        raise DegenerateConicError("ellipse_center: B^2 - 4AC = 0")
    xc = (2.0 * C * D - B * E) / den
    yc = (2.0 * A * E - B * D) / den
    return np.array([xc, yc])


def validate_hole(
    e: EllipseFit,
    hole_radius: float,
    axis_tol: float = 0.04,
    ecc_max: float = 0.6,
) -> bool:
    """Accept iff the semi-major axis is within tolerance of the known hole
    radius and the eccentricity is below the near-circularity bound."""
    return abs(e.semi_major - hole_radius) < axis_tol and e.eccentricity < ecc_max


def order_hole_centers(
    centers: np.ndarray,
    target: TargetGeometry,
    sensor_origin=(0.0, 0.0, 0.0),
) -> np.ndarray:
    """Permutation mapping canonical hole indices to detected centers.

    Searches all 24 assignments for the one whose rigid alignment with the
    board layout has minimal RMS residual; ties are broken by requiring the
    induced board normal to point toward the sensor.
    """
    from .registration import kabsch  # local import to avoid a module cycle

    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != (4, 3):
        raise ValidationError(f"order_hole_centers: expected (4, 3), got {centers.shape}")
    for i in range(4):
        for j in range(i + 1, 4):
            if np.linalg.norm(centers[i] - centers[j]) < 1e-9:
                raise ValidationError("order_hole_centers: centers must be distinct")
    origin = np.asarray(sensor_origin, dtype=np.float64)
    board = target.hole_centers_board

    results = []
    for perm in permutations(range(4)):
        dst = centers[list(perm)]
        try:
            t = kabsch(board, dst)
        except DegenerateInputError:
            continue
        res = dst - t.apply(board)
        rms = float(np.sqrt((res ** 2).sum(axis=1).mean()))
        results.append((rms, perm))
    if not results:
        raise DegenerateInputError("order_hole_centers: all assignments degenerate")
    results.sort(key=lambda rp: rp[0])
    best_rms = results[0][0]
    candidates = [perm for rms, perm in results if rms <= best_rms + 1e-6]
    if len(candidates) == 1:
        return np.array(candidates[0], dtype=np.int64)

    toward = []
    for perm in candidates:
        ordered = centers[list(perm)]
        a1 = ordered[1] - ordered[0]   # top-left -> top-right
        a2 = ordered[0] - ordered[3]   # bottom-left -> top-left
        normal = np.cross(a1, a2)
        centroid = ordered.mean(axis=0)
        if normal @ (origin - centroid) > 0:
            toward.append(perm)
    if len(toward) == 1:
        return np.array(toward[0], dtype=np.int64)
    raise AmbiguousOrderError(
        f"order_hole_centers: {len(candidates)} assignments within 1e-6 m residual "
        "and the facing-direction tie-break cannot separate them"
    )


def extract_hole_centers(
    cloud: PointCloud,
    roi: RoiBounds,
    target: TargetGeometry,
    params: ExtractionParams = ExtractionParams(),
) -> list[HoleDetection]:
    """Full chain from raw cloud to 4 ordered hole centers in the LiDAR frame."""
    filtered = passthrough_filter(cloud, roi)
    plane, inliers = ransac_plane(
        filtered,
        inlier_threshold=params.ransac_inlier_m,
        max_iters=params.ransac_iters,
        seed=params.seed,
        min_inlier_ratio=params.min_inlier_ratio,
    )
    points2d, lift = align_plane_to_z0(plane, inliers)
    down = voxel_downsample(points2d, params.voxel_leaf_m)
    edges = extract_edge_points(down, params.edge_radius_m, params.edge_gap_deg)
    clusters = euclidean_cluster(edges, params.cluster_tol_m, params.cluster_min)

    fits = []
    for idx in clusters:
        try:
            fit = fit_ellipse_direct(edges[idx])
        except FitError:
            continue
        if validate_hole(fit, target.hole_radius, params.axis_tol_m, params.ecc_max):
            fits.append(fit)

    if len(fits) < 4:
        raise HoleCountError(found=len(fits))
    if len(fits) > 4:
        fits = _best_hole_subset(fits, lift, target)

    centers3d = np.array([
        lift.apply(np.array([f.center[0], f.center[1], 0.0])) for f in fits
    ])
    perm = order_hole_centers(centers3d, target)
    return [
        HoleDetection(
            center_3d=centers3d[perm[i]],
            ellipse=fits[perm[i]],
            correspondence_index=i,
        )
        for i in range(4)
    ]


def _best_hole_subset(
    fits: list[EllipseFit],
    lift: RigidTransform,
    target: TargetGeometry,
) -> list[EllipseFit]:
    """Among >4 validated ellipses keep the 4 best matching the layout."""
    from .registration import kabsch

    centers3d = np.array([
        lift.apply(np.array([f.center[0], f.center[1], 0.0])) for f in fits
    ])
    board = target.hole_centers_board
    best = None
    for subset in combinations(range(len(fits)), 4):
        sub = centers3d[list(subset)]
        best_rms = np.inf
        for perm in permutations(range(4)):
            dst = sub[list(perm)]
            try:
                t = kabsch(board, dst)
            except DegenerateInputError:
                continue
            res = dst - t.apply(board)
            rms = float(np.sqrt((res ** 2).sum(axis=1).mean()))
            best_rms = min(best_rms, rms)
        if best is None or best_rms < best[0]:
            best = (best_rms, subset)
    if best is None:
        raise HoleCountError(found=len(fits))
    return [fits[i] for i in best[1]]
