"""Vectors, rotations, oriented boxes and the pinhole camera model.

Conventions used throughout the package:

* World frame is right-handed, z-up, units are meters.
* A camera with identity orientation looks along +x, with +y to its left
  and +z up. Yaw rotates about world z, pitch about the camera's lateral
  axis (negative pitch tilts the optical axis down), roll about the
  optical axis.
* Image coordinates: u grows to the right, v grows downward, the origin
  is the top-left corner. Pixel (i, j) covers [i, i+1) x [j, j+1) and is
  sampled at its center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

# Offset (degrees) added to the pitch of cameras aimed at a pivot point.
PITCH_AIM_OFFSET_DEG = 15.0

_SAT_EPS = 1e-12

# Box fitting tries at most this many hull-face orientations (largest
# merged faces first); more buys little tightness at real cost.
_MAX_FACE_CANDIDATES = 16

# Corner sign pattern shared by Obb.corners and collision helpers.
_CORNER_SIGNS = np.array(
    [
        [-1.0, -1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, -1.0],
        [1.0, 1.0, 1.0],
    ]
)


class GeometryError(ValueError):
    """Invalid geometric input (non-finite values, empty sets, ...)."""


@dataclass(frozen=True, slots=True)
class Vec3:
    """Point or direction in the world frame, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise GeometryError(f"non-finite Vec3 components: ({self.x}, {self.y}, {self.z})")

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


def planar_distance(a: Vec3, b: Vec3) -> float:
    """Distance between two points in the x-y plane."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True, eq=False)
class Rotation:
    """Rotation stored as a unit quaternion (w, x, y, z)."""

    quat: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float)
        if q.shape != (4,):
            raise GeometryError(f"quaternion must have 4 components, got shape {q.shape}")
        n = float(np.linalg.norm(q))
        if not math.isfinite(n) or n < 1e-12:
            raise GeometryError("degenerate quaternion")
        object.__setattr__(self, "quat", q / n)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_axis_angle(cls, axis, angle_deg: float) -> "Rotation":
        a = np.asarray(axis, dtype=float)
        n = np.linalg.norm(a)
        if n < 1e-12:
            raise GeometryError("zero rotation axis")
        half = math.radians(angle_deg) / 2.0
        return cls(np.concatenate(([math.cos(half)], math.sin(half) * a / n)))

    @classmethod
    def from_yaw_deg(cls, yaw_deg: float) -> "Rotation":
        return cls.from_axis_angle((0.0, 0.0, 1.0), yaw_deg)

    @classmethod
    def from_rpy_deg(cls, roll_deg: float, pitch_deg: float, yaw_deg: float) -> "Rotation":
        """Compose roll about +x, pitch about the lateral (y) axis, yaw about z.

        The pitch sign is chosen so that negative pitch tilts the optical
        axis below the horizon: with yaw=0 the forward axis ends up at
        (cos p, 0, sin p) for pitch p.
        """
        qz = cls.from_axis_angle((0.0, 0.0, 1.0), yaw_deg)
        qy = cls.from_axis_angle((0.0, 1.0, 0.0), -pitch_deg)
        qx = cls.from_axis_angle((1.0, 0.0, 0.0), roll_deg)
        return qz * qy * qx

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        """Quaternion from a rotation matrix (largest-pivot branch method)."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError("rotation matrix must be 3x3")
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0.0:
            s = math.sqrt(tr + 1.0) * 2.0
            q = np.array(
                [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
            )
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
        return cls(q)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def apply(self, points) -> np.ndarray:
        """Rotate one point (3,) or a batch (N, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.as_matrix().T

    def inverse(self) -> "Rotation":
        w, x, y, z = self.quat
        return Rotation(np.array([w, -x, -y, -z]))

    def __mul__(self, other: "Rotation") -> "Rotation":
        """Composition: (a * b).apply(p) == a.apply(b.apply(p))."""
        w1, x1, y1, z1 = self.quat
        w2, x2, y2, z2 = other.quat
        return Rotation(
            np.array(
                [
                    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
                ]
            )
        )


@dataclass(frozen=True, eq=False)
class Obb:
    """Oriented 3D bounding box: center, half extents and orientation."""

    center: Vec3
    half_extents: np.ndarray
    orientation: Rotation = field(default_factory=Rotation.identity)

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,):
            raise GeometryError(f"half_extents must have 3 components, got shape {h.shape}")
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise GeometryError(f"half_extents must be finite and nonnegative, got {h}")
        object.__setattr__(self, "half_extents", h)

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def corners(self) -> np.ndarray:
        """The 8 corner points, shape (8, 3)."""
        local = _CORNER_SIGNS * self.half_extents
        return self.center.as_array() + local @ self.orientation.as_matrix().T

    def contains(self, points, tol: float = 1e-6) -> np.ndarray:
        """Boolean mask of points inside the (tol-inflated) box."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        local = (p - self.center.as_array()) @ self.orientation.as_matrix()
        return np.all(np.abs(local) <= self.half_extents + tol, axis=1)

    def transformed(self, scale: float, rotation: Rotation, translation: Vec3) -> "Obb":
        """Box under p -> translation + rotation.apply(scale * p)."""
        if scale <= 0:
            raise GeometryError(f"scale must be positive, got {scale}")
        new_center = Vec3.from_array(
            translation.as_array() + rotation.apply(scale * self.center.as_array())
        )
        return Obb(new_center, scale * self.half_extents, rotation * self.orientation)


def _min_area_rect_axes(pts2d: np.ndarray):
    """Rotating calipers over the 2D convex hull; returns (u, v, area)."""
    try:
        hull = ConvexHull(pts2d)
        hp = pts2d[hull.vertices]
    except QhullError:
        # Collinear points: rectangle degenerates to a segment along the span.
        centered = pts2d - pts2d.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        u = vt[0]
        v = np.array([-u[1], u[0]])
        return u, v, 0.0
    edges = np.roll(hp, -1, axis=0) - hp
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 1e-12
    if not keep.any():
        return None
    us = edges[keep] / lengths[keep, None]  # (E, 2)
    vs = np.column_stack([-us[:, 1], us[:, 0]])
    pu = hp @ us.T  # (H, E)
    pv = hp @ vs.T
    areas = np.ptp(pu, axis=0) * np.ptp(pv, axis=0)
    k = int(np.argmin(areas))
    return us[k], vs[k], float(areas[k])


def _cross3(a, b) -> np.ndarray:
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def _plane_basis(normal: np.ndarray):
    k = int(np.argmin(np.abs(normal)))
    e = np.zeros(3)
    e[k] = 1.0
    u = _cross3(normal, e)
    u /= np.linalg.norm(u)
    return u, _cross3(normal, u)


def _box_from_axes(pts: np.ndarray, axes: np.ndarray) -> Obb:
    """Tightest box with the given orthonormal axes (columns)."""
    proj = pts @ axes
    mn = proj.min(axis=0)
    mx = proj.max(axis=0)
    center = axes @ ((mn + mx) / 2.0)
    return Obb(Vec3.from_array(center), (mx - mn) / 2.0, Rotation.from_matrix(axes))


def _pca_axes(pts: np.ndarray) -> np.ndarray:
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    axes = vecs[:, ::-1]  # descending variance
    # Canonical signs, then rebuild the last axis to keep the frame right-handed.
    for i in range(2):
        k = int(np.argmax(np.abs(axes[:, i])))
        if axes[k, i] < 0:
            axes[:, i] = -axes[:, i]
    axes[:, 2] = np.cross(axes[:, 0], axes[:, 1])
    return axes


def _hull_face_axes(pts: np.ndarray):
    """Candidate axis frames from the convex hull's face normals.

    For each distinct face normal, the in-plane axes come from the
    minimum-area rectangle of the hull vertices projected on that plane.
    Returns (frames, hull_points); extents computed over hull points are
    exact for the full cloud because extremes lie on the hull.
    """
    hull = ConvexHull(pts)
    hull_pts = pts[hull.vertices]
    normals = hull.equations[:, :3]
    # Deduplicate normals (including opposite pairs) and rank the merged
    # faces by total area; only the largest drive the fit.
    canon = normals.copy()
    flip = (canon[:, 0] < 0) | ((canon[:, 0] == 0) & (canon[:, 1] < 0)) | (
        (canon[:, 0] == 0) & (canon[:, 1] == 0) & (canon[:, 2] < 0)
    )
    canon[flip] = -canon[flip]
    unique, inverse = np.unique(np.round(canon, 6), axis=0, return_inverse=True)
    tri = pts[hull.simplices]
    tri_areas = 0.5 * np.linalg.norm(
        np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
    )
    face_areas = np.zeros(len(unique))
    np.add.at(face_areas, inverse, tri_areas)
    order = np.argsort(-face_areas, kind="stable")[:_MAX_FACE_CANDIDATES]
    frames = []
    for n in unique[order]:
        nn = np.linalg.norm(n)
        if nn < 1e-12:
            continue
        w = n / nn
        u0, v0 = _plane_basis(w)
        rect = _min_area_rect_axes(hull_pts @ np.column_stack([u0, v0]))
        if rect is None:
            continue
        ru, rv, _ = rect
        a = ru[0] * u0 + ru[1] * v0
        b = rv[0] * u0 + rv[1] * v0
        frames.append(np.column_stack([a, b, _cross3(a, b)]))
    return frames, hull_pts


def obb_from_vertices(vertices) -> Obb:
    """Fit an oriented bounding box that contains every input vertex.

    Candidate orientations are gathered from the axis-aligned frame, the
    principal axes of the vertex cloud, and the convex hull's face
    normals (with a minimum-area rectangle in each face plane); the
    smallest-volume candidate wins. Hull-face candidates are what
    recovers exact boxes for box-shaped input, where the principal axes
    are degenerate.
    """
    pts = np.atleast_2d(np.asarray(vertices, dtype=float))
    if pts.size == 0:
        raise GeometryError("obb_from_vertices requires at least one vertex")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError(f"vertices must have shape (N, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("vertices must be finite")

    span = pts.max(axis=0) - pts.min(axis=0)
    if np.all(span == 0.0):
        return Obb(Vec3.from_array(pts[0]), np.zeros(3))

    eval_pts = pts
    candidates = [np.eye(3), _pca_axes(pts)]
    try:
        face_frames, hull_pts = _hull_face_axes(pts)
        candidates.extend(face_frames)
        eval_pts = hull_pts
    except QhullError:
        # Coplanar or collinear cloud: use the plane normal (least-variance
        # principal axis) plus a min-area rectangle in that plane.
        w = _pca_axes(pts)[:, 2]
        u0, v0 = _plane_basis(w)
        rect = _min_area_rect_axes(pts @ np.column_stack([u0, v0]))
        if rect is not None:
            ru, rv, _ = rect
            a = ru[0] * u0 + ru[1] * v0
            b = rv[0] * u0 + rv[1] * v0
            candidates.append(np.column_stack([a, b, _cross3(a, b)]))

    frames = np.stack(candidates)
    dets = np.linalg.det(frames)
    frames[dets < 0, :, 2] *= -1.0
    # Volumes of all candidates in one pass; first minimal wins so the
    # axis-aligned frame takes exact ties.
    proj = np.einsum("nd,cde->cne", eval_pts, frames)
    extents = proj.max(axis=1) - proj.min(axis=1)
    volumes = np.prod(extents, axis=1)
    tol = 1e-12 * max(1.0, float(volumes.min()))
    best = int(np.nonzero(volumes <= volumes.min() + tol)[0][0])
    return _box_from_axes(pts, frames[best])


def _obb_arrays(obb: Obb):
    return obb.center.as_array(), obb.half_extents, obb.orientation.as_matrix()


def obb_overlap_mask(
    center_a: np.ndarray,
    half_a: np.ndarray,
    rot_a: np.ndarray,
    centers_b: np.ndarray,
    halves_b: np.ndarray,
    rots_b: np.ndarray,
) -> np.ndarray:
    """Separating-axis test of one box against a batch of boxes.

    All 15 candidate axes (3 face normals each plus 9 edge cross
    products) are checked; closed boxes that merely touch count as
    overlapping. Near-parallel edge pairs are handled by inflating the
    projected radii with a small epsilon, which can only err on the side
    of reporting an overlap.
    """
    k = centers_b.shape[0]
    if k == 0:
        return np.zeros(0, dtype=bool)
    rot = np.einsum("ji,kjl->kil", rot_a, rots_b)  # (k,3,3) rot_a^T @ rot_b
    t = (centers_b - center_a) @ rot_a  # (k,3) in A's frame
    abs_rot = np.abs(rot) + _SAT_EPS
    sep = np.zeros(k, dtype=bool)

    # Face axes of A.
    for i in range(3):
        rb = np.einsum("kj,kj->k", abs_rot[:, i, :], halves_b)
        sep |= np.abs(t[:, i]) > half_a[i] + rb
    # Face axes of B.
    proj_t = np.abs(np.einsum("ki,kij->kj", t, rot))
    ra = np.einsum("i,kij->kj", half_a, abs_rot)
    sep |= np.any(proj_t > ra + halves_b, axis=1)
    # Cross-product axes A_i x B_j.
    idx = ((1, 2), (0, 2), (0, 1))
    for i in range(3):
        i1, i2 = idx[i]
        for j in range(3):
            j1, j2 = idx[j]
            lhs = np.abs(t[:, i2] * rot[:, i1, j] - t[:, i1] * rot[:, i2, j])
            rhs = (
                half_a[i1] * abs_rot[:, i2, j]
                + half_a[i2] * abs_rot[:, i1, j]
                + halves_b[:, j1] * abs_rot[:, i, j2]
                + halves_b[:, j2] * abs_rot[:, i, j1]
            )
            sep |= lhs > rhs
    return ~sep


def obb_intersects(a: Obb, b: Obb) -> bool:
    """Whether two closed oriented boxes share at least one point."""
    ca, ha, ra = _obb_arrays(a)
    cb, hb, rb = _obb_arrays(b)
    return bool(obb_overlap_mask(ca, ha, ra, cb[None], hb[None], rb[None])[0])


def pitch_toward(pivot: Vec3, cam_pos: Vec3) -> float:
    """Camera pitch (degrees) aiming at a pivot from a position.

    atan2 of the height difference over the planar distance, plus a fixed
    15 degree offset so the target sits below the image center.
    """
    d = planar_distance(pivot, cam_pos)
    dz = pivot.z - cam_pos.z
    if d == 0.0 and dz == 0.0:
        raise GeometryError("camera position coincides with the pivot")
    return math.degrees(math.atan2(dz, d)) + PITCH_AIM_OFFSET_DEG


def bearing_deg(from_pos: Vec3, to_pos: Vec3) -> float:
    """Heading (yaw, degrees) of the x-y ray from one point to another."""
    return math.degrees(math.atan2(to_pos.y - from_pos.y, to_pos.x - from_pos.x))


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera: world pose plus intrinsics.

    The focal length is derived from the horizontal field of view as
    width / (2 tan(fov/2)); pixels are square. The principal point
    defaults to the image center.
    """

    position: Vec3
    orientation: Rotation
    width: int = 1920
    height: int = 1080
    fov_horizontal_deg: float = 90.0
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        if not 0.0 < self.fov_horizontal_deg < 180.0:
            raise GeometryError(f"fov must be in (0, 180) degrees, got {self.fov_horizontal_deg}")

    @property
    def focal_px(self) -> float:
        return self.width / (2.0 * math.tan(math.radians(self.fov_horizontal_deg) / 2.0))

    @property
    def principal(self) -> tuple[float, float]:
        if self.principal_point is not None:
            return self.principal_point
        return (self.width / 2.0, self.height / 2.0)

    def world_to_camera(self, points) -> np.ndarray:
        """World points into the camera frame (x forward, y left, z up)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p - self.position.as_array()) @ self.orientation.as_matrix()

    def project_array(self, points):
        """Project (N, 3) world points; returns (uv, depth, in_front)."""
        pc = self.world_to_camera(points)
        depth = pc[:, 0]
        in_front = depth > 0.0
        f = self.focal_px
        cx, cy = self.principal
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cx - f * pc[:, 1] / depth
            v = cy - f * pc[:, 2] / depth
        uv = np.column_stack([u, v])
        uv[~in_front] = np.nan
        return uv, depth, in_front

    def backproject(self, u: float, v: float, depth: float) -> Vec3:
        """Invert project_point for a pixel position and optical-axis depth."""
        f = self.focal_px
        cx, cy = self.principal
        pc = np.array([depth, (cx - u) * depth / f, (cy - v) * depth / f])
        return Vec3.from_array(self.position.as_array() + self.orientation.apply(pc))


def project_point(cam: CameraModel, p: Vec3):
    """Pixel coordinates and depth of a world point, or None if behind.

    Depth is the distance along the optical axis, not the euclidean ray
    length. Points at or behind the camera plane yield None.
    """
    uv, depth, in_front = cam.project_array(p.as_array()[None])
    if not in_front[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0])
