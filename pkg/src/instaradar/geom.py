"""Rigid transforms, the pinhole camera model, and calibration files.

Camera convention: +z forward, +x right, +y down. Poses map points from a
child frame into a parent frame (``sensor_to_ego`` takes sensor-frame
coordinates to ego-frame coordinates).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

DEFAULT_Z_MIN = 0.1


def _quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrix to (w, x, y, z), Shepperd's branch selection, w >= 0."""
    r = np.asarray(r, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s,
                      (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s,
                      0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q


@dataclass(frozen=True)
class Pose:
    """Rigid transform: unit quaternion ``rotation`` (w, x, y, z) and ``translation`` in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.array(self.rotation, dtype=float).reshape(4)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("pose components must be finite")
        norm = np.sqrt(q @ q)
        if norm < 1e-12:
            raise ValueError("rotation quaternion has zero norm")
        if norm != 1.0:
            q = q / norm
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float).reshape(4, 4)
        return cls(matrix_to_quat(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)], translation)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Transform a single 3-vector or an (N, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def inverse(self) -> "Pose":
        return invert(self)

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def compose(a: Pose, b: Pose) -> Pose:
    """Pose that applies ``b`` first, then ``a``."""
    return Pose(_quat_multiply(a.rotation, b.rotation), a.apply(b.translation))


def invert(p: Pose) -> Pose:
    w, x, y, z = p.rotation
    conj = np.array([w, -x, -y, -z])
    return Pose(conj, -(p.rotation_matrix.T @ p.translation))


def transform_point(p: Pose, pt) -> np.ndarray:
    return p.apply(pt)


def rotation_angle_between(a: Pose, b: Pose) -> float:
    """Angle in radians of the relative rotation between two poses."""
    w, x, y, z = a.rotation
    rel = _quat_multiply(np.array([w, -x, -y, -z]), b.rotation)
    return 2.0 * float(np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def crop(self, x0: int, y0: int, width: int, height: int) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx, self.fy, self.cx - x0, self.cy - y0, width, height)


class PixelDepth(NamedTuple):
    u: int
    v: int
    depth: float


def project(k: CameraIntrinsics, pt_cam, z_min: float = DEFAULT_Z_MIN) -> Optional[PixelDepth]:
    """Project a camera-frame point to the nearest pixel, or None if outside the frustum."""
    x, y, z = (float(c) for c in pt_cam)
    if not z > z_min:
        return None
    u = round(k.fx * x / z + k.cx)
    v = round(k.fy * y / z + k.cy)
    if not (0 <= u < k.width and 0 <= v < k.height):
        return None
    return PixelDepth(u, v, z)


def project_points(k: CameraIntrinsics, pts_cam, z_min: float = DEFAULT_Z_MIN):
    """Vectorized ``project``.

    Returns ``(u, v, depth)`` integer/float arrays holding only the points
    that land inside the image, plus the boolean keep-mask over the input.
    """
    pts = np.asarray(pts_cam, dtype=float).reshape(-1, 3)
    z = pts[:, 2]
    keep = z > z_min
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.rint(k.fx * pts[:, 0] / z + k.cx)
        v = np.rint(k.fy * pts[:, 1] / z + k.cy)
    keep &= (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
    return u[keep].astype(np.int64), v[keep].astype(np.int64), z[keep], keep


def backproject(k: CameraIntrinsics, u, v, depth) -> np.ndarray:
    """Camera-frame point(s) seen at pixel (u, v) at the given depth."""
    d = np.asarray(depth, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("backproject requires depth > 0")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([(u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d * np.ones_like(u)], axis=-1)


@dataclass(frozen=True)
class Calibration:
    """Per-sensor, per-frame calibration as stored in calibration JSON files."""

    sensor_to_ego: Pose
    ego_to_global: Pose
    timestamp_us: int
    intrinsics: Optional[CameraIntrinsics] = None

    def to_dict(self) -> dict:
        d = {}
        if self.intrinsics is not None:
            k = self.intrinsics
            d["intrinsics"] = [k.fx, k.fy, k.cx, k.cy]
            d["width"] = k.width
            d["height"] = k.height
        d["sensor_to_ego"] = self.sensor_to_ego.as_matrix().ravel().tolist()
        d["ego_to_global"] = self.ego_to_global.as_matrix().ravel().tolist()
        d["timestamp_us"] = int(self.timestamp_us)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        for key in ("sensor_to_ego", "ego_to_global", "timestamp_us"):
            if key not in d:
                raise ValueError(f"calibration is missing '{key}'")
        intr = None
        if "intrinsics" in d:
            fx, fy, cx, cy = (float(x) for x in d["intrinsics"])
            intr = CameraIntrinsics(fx, fy, cx, cy, int(d["width"]), int(d["height"]))
        mats = []
        for key in ("sensor_to_ego", "ego_to_global"):
            vals = d[key]
            if len(vals) != 16:
                raise ValueError(f"'{key}' must hold 16 row-major floats, got {len(vals)}")
            mats.append(Pose.from_matrix(np.array(vals, dtype=float)))
        return cls(mats[0], mats[1], int(d["timestamp_us"]), intr)


def load_calibration(path) -> Calibration:
    with open(path, encoding="utf-8") as f:
        return Calibration.from_dict(json.load(f))


def save_calibration(path, calib: Calibration) -> None:
    Path(path).write_text(json.dumps(calib.to_dict(), indent=2) + "\n", encoding="utf-8")
