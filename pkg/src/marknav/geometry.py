"""Frame transforms, pinhole projection, and polyline metrics.

Conventions used throughout the package:

* robot frame: x forward, y left, z up (right-handed)
* camera frame: z forward, x right, y down (standard pinhole)
* image plane: u right, v down, origin at the top-left pixel
"""

import math
from dataclasses import dataclass, field

import numpy as np

Z_NEAR = 0.05  # near clipping plane in meters for image projection


class EmptyCurve(Exception):
    """A polyline metric was asked about an empty curve."""


class DegenerateCurve(Exception):
    """A curve with zero total arc length cannot be resampled."""


class EmptyProjection(Exception):
    """No waypoint survived behind-camera and frame clipping."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; heading is normalized to (-pi, pi] on construction."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def _as_points(polyline) -> np.ndarray:
    """Coerce a Trajectory or array-like into an (N, 2) float array."""
    if isinstance(polyline, Trajectory):
        return polyline.waypoints
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts.reshape(1, 2)
    return pts


@dataclass
class Trajectory:
    """Ordered 2D waypoints in the robot frame with a scalar confidence."""

    waypoints: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("trajectory needs at least 2 waypoints of shape (M, 2)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory waypoints must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        self.waypoints = pts

    def __len__(self) -> int:
        return self.waypoints.shape[0]

    @property
    def arc_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    @property
    def is_degenerate(self) -> bool:
        """True when all waypoints coincide (e.g. a zero decoder output)."""
        return self.arc_length < 1e-12


def rotation2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def robot_to_world(points, pose: Pose2D) -> np.ndarray:
    """Map robot-frame points into the world frame at ``pose``."""
    pts = _as_points(points)
    return pts @ rotation2d(pose.heading).T + pose.xy


def world_to_robot(points, pose: Pose2D) -> np.ndarray:
    """Map world-frame points into the robot frame at ``pose``."""
    pts = _as_points(points)
    return (pts - pose.xy) @ rotation2d(pose.heading)


@dataclass
class CameraModel:
    """Pinhole intrinsics plus a rigid robot-frame -> camera-frame extrinsic."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the frame")
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @classmethod
    def from_mount(cls, fx, fy, cx, cy, width, height, mount_xyz=(0.0, 0.0, 0.8), pitch=0.0):
        """Build the extrinsic from a camera mount point and a downward pitch.

        The camera sits at ``mount_xyz`` in the robot frame, looks along robot +x
        at pitch 0, and tips toward the ground for pitch > 0.
        """
        sp, cp = math.sin(pitch), math.cos(pitch)
        # rows are the camera's right / down / forward axes in robot coordinates
        rot = np.array([
            [0.0, -1.0, 0.0],
            [-sp, 0.0, -cp],
            [cp, 0.0, -sp],
        ])
        trans = -rot @ np.asarray(mount_xyz, dtype=float)
        return cls(fx, fy, cx, cy, width, height, rot, trans)

    @property
    def position_robot(self) -> np.ndarray:
        """Camera center expressed in the robot frame."""
        return -self.rotation.T @ self.translation


@dataclass
class PixelPolyline:
    """Projected polyline; ``clipped[i]`` marks source waypoints that were removed."""

    points: np.ndarray
    clipped: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.clipped = np.asarray(self.clipped, dtype=bool).reshape(-1)

    def __len__(self) -> int:
        return self.points.shape[0]


def to_camera_frame(traj, cam: CameraModel) -> np.ndarray:
    """Lift robot-frame waypoints to the ground plane and apply the extrinsic."""
    pts = _as_points(traj)
    p3 = np.column_stack([pts, np.zeros(len(pts))])
    return p3 @ cam.rotation.T + cam.translation


def _clip_segment_to_rect(p0, p1, xmax, ymax):
    """Liang-Barsky clip of segment p0->p1 against [0, xmax] x [0, ymax]."""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-d[0], p0[0] - 0.0),
        (d[0], xmax - p0[0]),
        (-d[1], p0[1] - 0.0),
        (d[1], ymax - p0[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return None
            t0 = max(t0, r)
        else:
            if r < t0:
                return None
            t1 = min(t1, r)
    return p0 + t0 * d, p0 + t1 * d


def project_to_image(points3d, cam: CameraModel, z_near: float = Z_NEAR) -> PixelPolyline:
    """Project camera-frame points through the pinhole model.

    Waypoints with depth <= ``z_near`` are dropped and flagged; segments that
    cross the near plane or the frame boundary are cut at the crossing so every
    emitted point satisfies 0 <= u < width, 0 <= v < height.

    Raises EmptyProjection when nothing survives.
    """
    pts = np.asarray(points3d, dtype=float).reshape(-1, 3)
    n = len(pts)
    xmax, ymax = cam.width - 1.0, cam.height - 1.0

    def pix(p):
        return np.array([cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy])

    def in_rect(uv):
        return 0.0 <= uv[0] <= xmax and 0.0 <= uv[1] <= ymax

    clipped = np.zeros(n, dtype=bool)
    for i, p in enumerate(pts):
        clipped[i] = p[2] <= z_near or not in_rect(pix(p))

    out: list[np.ndarray] = []

    def emit(uv):
        if not out or np.linalg.norm(out[-1] - uv) > 1e-9:
            out.append(uv)

    if n == 1:
        if not clipped[0]:
            emit(pix(pts[0]))
    for i in range(n - 1):
        a, b = pts[i], pts[i + 1]
        if a[2] <= z_near and b[2] <= z_near:
            continue
        # cut the segment at the near plane before projecting
        if a[2] <= z_near:
            a = a + (b - a) * ((z_near + 1e-12) - a[2]) / (b[2] - a[2])
        elif b[2] <= z_near:
            b = a + (b - a) * ((z_near + 1e-12) - a[2]) / (b[2] - a[2])
        seg = _clip_segment_to_rect(pix(a), pix(b), xmax, ymax)
        if seg is None:
            continue
        emit(seg[0])
        emit(seg[1])

    if not out:
        raise EmptyProjection("no waypoint projects into the frame")
    return PixelPolyline(np.array(out), clipped)


def frechet_distance(a, b) -> float:
    """Discrete Frechet distance between two polylines (exact DP)."""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyCurve("frechet_distance needs non-empty curves")
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[-1, -1])


def hausdorff_distance(a, b) -> float:
    """Symmetric point-set Hausdorff distance over raw waypoints."""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyCurve("hausdorff_distance needs non-empty curves")
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def distance_to_goal(traj, goal) -> float:
    """Euclidean distance from the final waypoint to the goal point."""
    pts = _as_points(traj)
    if len(pts) == 0:
        raise EmptyCurve("distance_to_goal needs a non-empty trajectory")
    return float(np.linalg.norm(pts[-1] - np.asarray(goal, dtype=float)))


def arc_lengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length at every point, starting at 0."""
    segs = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(segs)])


def resample_points(points, n: int) -> np.ndarray:
    """Resample a polyline to n points uniformly spaced in arc length."""
    if n < 2:
        raise ValueError("resample needs n >= 2")
    pts = _as_points(points)
    s = arc_lengths(pts)
    total = s[-1]
    if total <= 0.0:
        raise DegenerateCurve("cannot resample a zero-length curve")
    targets = np.linspace(0.0, total, n)
    out = np.column_stack([
        np.interp(targets, s, pts[:, 0]),
        np.interp(targets, s, pts[:, 1]),
    ])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def resample(traj: Trajectory, n: int) -> Trajectory:
    """Uniform arc-length resampling that preserves endpoints and confidence."""
    return Trajectory(resample_points(traj.waypoints, n), confidence=traj.confidence)
