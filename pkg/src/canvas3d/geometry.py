"""Core spatial math: vectors, rotations, transforms, boxes, camera projection.

Conventions used across the engine:

* World frame is right-handed, y up, distances in meters.
* Rotations are unit quaternions (w, x, y, z) internally and
  yaw/pitch/roll degrees in files.  Composition order for Euler angles is
  yaw about +y, then pitch about +x, then roll about +z (intrinsic Y-X'-Z'').
* Cameras look along their local -z axis ("view depth" is -z in camera
  coordinates); pixel u grows right, v grows down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DegenerateCameraError

_TWO_PI = 2.0 * math.pi


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        if not _finite(self.x, self.y, self.z):
            raise ValueError(f"non-finite vector component: {self}")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize near-zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @staticmethod
    def from_array(a) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z).  |q| must be 1 within 1e-6."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        if not _finite(self.w, self.x, self.y, self.z):
            raise ValueError("non-finite quaternion component")
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} deviates from 1 by more than 1e-6")

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Vec3, degrees: float) -> "Rotation":
        a = axis.normalized()
        half = math.radians(degrees) / 2.0
        s = math.sin(half)
        return Rotation(math.cos(half), a.x * s, a.y * s, a.z * s)

    @staticmethod
    def from_yaw_pitch_roll(yaw: float, pitch: float, roll: float) -> "Rotation":
        """Euler degrees, intrinsic y-x'-z'' (yaw, then pitch, then roll)."""
        qy = Rotation.from_axis_angle(Vec3(0, 1, 0), yaw)
        qx = Rotation.from_axis_angle(Vec3(1, 0, 0), pitch)
        qz = Rotation.from_axis_angle(Vec3(0, 0, 1), roll)
        return qy.compose(qx).compose(qz)

    def compose(self, other: "Rotation") -> "Rotation":
        """Return self * other (apply `other` first, then self)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        q = (
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
        n = math.sqrt(sum(c * c for c in q))
        return Rotation(*(c / n for c in q))

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def apply(self, v: Vec3) -> Vec3:
        # q v q^-1 expanded via the rotation matrix (cheaper, no temporaries)
        m = self.matrix()
        a = v.to_array()
        return Vec3.from_array(m @ a)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Rotation":
        """Shepperd's method; `m` must be a proper rotation matrix."""
        t = float(np.trace(m))
        if t > 0:
            s = math.sqrt(t + 1.0) * 2
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        n = math.sqrt(w * w + x * x + y * y + z * z)
        return Rotation(w / n, x / n, y / n, z / n)

    def to_yaw_pitch_roll(self) -> tuple[float, float, float]:
        """Inverse of from_yaw_pitch_roll.

        Canonical ranges: yaw, roll in (-180, 180], pitch in [-90, 90].
        At gimbal lock (|pitch| = 90) roll is folded into yaw and reported
        as 0 so the mapping stays a function.
        """
        m = self.matrix()
        # m = Ry(yaw) @ Rx(pitch) @ Rz(roll); m[1,2] = -sin(pitch)
        sp = -m[1, 2]
        sp = min(1.0, max(-1.0, float(sp)))
        pitch = math.asin(sp)
        if abs(sp) > 1.0 - 1e-12:
            yaw = math.atan2(-m[2, 0], m[0, 0])
            roll = 0.0
        else:
            yaw = math.atan2(m[0, 2], m[2, 2])
            roll = math.atan2(m[1, 0], m[1, 1])
        out = []
        for ang in (yaw, pitch, roll):
            deg = math.degrees(ang)
            if deg <= -180.0:
                deg += 360.0
            out.append(deg + 0.0)  # -0.0 -> 0.0
        return out[0], out[1], out[2]

    @staticmethod
    def between(a: Vec3, b: Vec3) -> "Rotation":
        """Minimal rotation taking direction `a` to direction `b`."""
        u = a.normalized()
        v = b.normalized()
        d = u.dot(v)
        if d > 1.0 - 1e-12:
            return Rotation.identity()
        if d < -1.0 + 1e-12:
            # Antiparallel: rotate 180 deg about any axis orthogonal to u.
            axis = u.cross(Vec3(1, 0, 0))
            if axis.norm() < 1e-9:
                axis = u.cross(Vec3(0, 1, 0))
            return Rotation.from_axis_angle(axis, 180.0)
        axis = u.cross(v)
        w = 1.0 + d
        n = math.sqrt(w * w + axis.dot(axis))
        return Rotation(w / n, axis.x / n, axis.y / n, axis.z / n)


@dataclass(frozen=True)
class TransformTRS:
    translation: Vec3 = field(default_factory=Vec3)
    rotation: Rotation = field(default_factory=Rotation.identity)
    scale: Vec3 = field(default_factory=lambda: Vec3(1.0, 1.0, 1.0))

    def __post_init__(self):
        if min(self.scale.x, self.scale.y, self.scale.z) <= 0:
            raise ValueError(f"scale components must be > 0, got {self.scale}")

    def apply(self, p: Vec3) -> Vec3:
        scaled = Vec3(p.x * self.scale.x, p.y * self.scale.y, p.z * self.scale.z)
        return self.translation + self.rotation.apply(scaled)

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of local points to world space."""
        s = np.array([self.scale.x, self.scale.y, self.scale.z])
        return (self.rotation.matrix() @ (pts * s).T).T + self.translation.to_array()


@dataclass(frozen=True)
class Aabb:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y or self.min.z > self.max.z:
            raise ValueError(f"Aabb min must be <= max componentwise: {self}")

    def corners(self) -> np.ndarray:
        xs = (self.min.x, self.max.x)
        ys = (self.min.y, self.max.y)
        zs = (self.min.z, self.max.z)
        return np.array([[x, y, z] for x in xs for y in ys for z in zs])

    def center(self) -> Vec3:
        return Vec3(
            (self.min.x + self.max.x) / 2,
            (self.min.y + self.max.y) / 2,
            (self.min.z + self.max.z) / 2,
        )

    def size(self) -> Vec3:
        return self.max - self.min

    def transformed(self, t: TransformTRS) -> "Aabb":
        """World-space axis-aligned envelope of this (local) box under `t`."""
        pts = t.apply_many(self.corners())
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return Aabb(Vec3.from_array(lo), Vec3.from_array(hi))

    @staticmethod
    def of_points(pts: np.ndarray) -> "Aabb":
        if len(pts) == 0:
            raise ValueError("no points")
        return Aabb(Vec3.from_array(np.min(pts, axis=0)), Vec3.from_array(np.max(pts, axis=0)))


# --- camera -----------------------------------------------------------------

@dataclass(frozen=True)
class CameraSpec:
    position: Vec3
    rotation: Rotation
    vertical_fov: float = 60.0
    image_width: int = 512
    image_height: int = 512
    near: float = 0.1
    far: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.vertical_fov < 180.0):
            raise ValueError(f"vertical_fov must be in (0, 180), got {self.vertical_fov}")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be >= 1 pixel")
        if not (0.0 < self.near < self.far):
            raise DegenerateCameraError(f"need 0 < near < far, got near={self.near} far={self.far}")

    @property
    def focal_px(self) -> float:
        return (self.image_height / 2.0) / math.tan(math.radians(self.vertical_fov) / 2.0)

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        """(N, 3) world points into camera coordinates (camera looks along -z)."""
        r = self.rotation.matrix()
        return (pts - self.position.to_array()) @ r  # == R^T (p - c), rowwise

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project (N, 3) world points.

        Returns (u, v, depth) arrays; depth is the view-space distance along
        the optical axis (positive in front of the camera).  u/v are only
        meaningful where depth > 0.
        """
        cam = self.world_to_camera(np.atleast_2d(pts))
        depth = -cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.image_width / 2.0 + self.focal_px * cam[:, 0] / depth
            v = self.image_height / 2.0 - self.focal_px * cam[:, 1] / depth
        return u, v, depth

    def project_point(self, p: Vec3) -> tuple[float, float, float]:
        u, v, d = self.project(p.to_array()[None, :])
        return float(u[0]), float(v[0]), float(d[0])

    def in_frame(self, u: float, v: float) -> bool:
        return 0.0 <= u < self.image_width and 0.0 <= v < self.image_height

    def ray_through_pixel(self, u: float, v: float) -> tuple[Vec3, Vec3]:
        """World-space (origin, unit direction) of the ray through pixel (u, v)."""
        f = self.focal_px
        d_cam = np.array(
            [(u - self.image_width / 2.0) / f, (self.image_height / 2.0 - v) / f, -1.0]
        )
        d_world = self.rotation.matrix() @ d_cam
        d_world /= np.linalg.norm(d_world)
        return self.position, Vec3.from_array(d_world)

    def forward(self) -> Vec3:
        return self.rotation.apply(Vec3(0, 0, -1))

    def right(self) -> Vec3:
        return self.rotation.apply(Vec3(1, 0, 0))


def look_at(position: Vec3, target: Vec3, up: Vec3 = Vec3(0, 1, 0)) -> Rotation:
    """Rotation that points a camera at `position` toward `target`."""
    fwd = (target - position).normalized()
    z_cam = -fwd
    x_arr = np.cross(up.to_array(), z_cam.to_array())
    n = np.linalg.norm(x_arr)
    if n < 1e-9:  # looking straight up/down: pick a stable side axis
        x_arr = np.cross(Vec3(0, 0, -1).to_array() if fwd.y > 0 else Vec3(0, 0, 1).to_array(),
                         z_cam.to_array())
        n = np.linalg.norm(x_arr)
    x_cam = x_arr / n
    y_cam = np.cross(z_cam.to_array(), x_cam)
    m = np.column_stack([x_cam, y_cam, z_cam.to_array()])
    return Rotation.from_matrix(m)


def intersect_ray_plane(origin: Vec3, direction: Vec3, plane_point: Vec3,
                        plane_normal: Vec3) -> Vec3 | None:
    """Ray/plane intersection; None when parallel or behind the origin."""
    denom = direction.dot(plane_normal)
    if abs(denom) < 1e-12:
        return None
    t = (plane_point - origin).dot(plane_normal) / denom
    if t < 0:
        return None
    return origin + direction * t


def check_grid_bounds(grid_x: float, grid_y: float, grid_units: int) -> None:
    if not (0.0 <= grid_x <= grid_units) or not (0.0 <= grid_y <= grid_units):
        raise BoundsError(
            f"grid coordinate ({grid_x}, {grid_y}) outside [0, {grid_units}]^2"
        )
