"""Radar sweep I/O, multi-sweep accumulation and rasterization to sparse depth."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .depthmap import DEFAULT_CAP, SparseDepthMap
from .geom import (DEFAULT_Z_MIN, Calibration, CameraIntrinsics, Pose, compose, invert,
                   load_calibration, project_points, save_calibration)

CSV_HEADER = ["x", "y", "z", "vx", "vy", "rcs", "timestamp_us"]
DEFAULT_SWEEPS = 5


class RadarFormatError(ValueError):
    """A radar CSV or its calibration sidecar could not be read."""

    def __init__(self, path, message, row=None, field=None):
        self.path, self.row, self.field = str(path), row, field
        where = str(path)
        if row is not None:
            where += f", line {row}"
        if field is not None:
            where += f", field '{field}'"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RadarPoint:
    position: tuple
    velocity: tuple = (0.0, 0.0)
    rcs: float = 0.0
    timestamp_us: int = 0

    def __post_init__(self):
        pos = tuple(float(c) for c in self.position)
        if len(pos) != 3 or not all(np.isfinite(pos)):
            raise ValueError(f"radar position must be a finite 3-vector, got {self.position}")
        if self.timestamp_us < 0:
            raise ValueError("timestamp_us must be non-negative")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", tuple(float(c) for c in self.velocity))


@dataclass(frozen=True)
class RadarSweep:
    points: tuple = ()
    sensor_to_ego: Pose = field(default_factory=Pose)
    ego_to_global: Pose = field(default_factory=Pose)
    timestamp_us: int = 0

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self):
        return len(self.points)

    @property
    def positions(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 3))
        return np.array([p.position for p in self.points], dtype=float)

    @property
    def velocities(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 2))
        return np.array([p.velocity for p in self.points], dtype=float)

    @property
    def point_timestamps(self) -> np.ndarray:
        return np.array([p.timestamp_us for p in self.points], dtype=np.int64)

    @property
    def calibration(self) -> Calibration:
        return Calibration(self.sensor_to_ego, self.ego_to_global, self.timestamp_us)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def parse_sweep(path) -> RadarSweep:
    """Read a radar CSV plus its ``.json`` calibration sidecar."""
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise RadarFormatError(path, f"missing calibration sidecar {side.name}")
    try:
        calib = load_calibration(side)
    except (ValueError, KeyError, TypeError) as e:
        raise RadarFormatError(side, f"bad calibration: {e}") from e

    points = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise RadarFormatError(path, f"malformed header {header!r}, expected {','.join(CSV_HEADER)}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise RadarFormatError(path, f"expected {len(CSV_HEADER)} fields, got {len(row)}", row=lineno)
            vals = []
            for name, text in zip(CSV_HEADER, row):
                try:
                    vals.append(int(text) if name == "timestamp_us" else float(text))
                except ValueError:
                    raise RadarFormatError(path, f"non-numeric value {text!r}", row=lineno, field=name) from None
            x, y, z, vx, vy, rcs, ts = vals
            if not all(np.isfinite((x, y, z))):
                raise RadarFormatError(path, "non-finite position", row=lineno, field="x")
            if ts < 0:
                raise RadarFormatError(path, "negative timestamp", row=lineno, field="timestamp_us")
            points.append(RadarPoint((x, y, z), (vx, vy), rcs, ts))
    return RadarSweep(points, calib.sensor_to_ego, calib.ego_to_global, calib.timestamp_us)


def write_sweep(path, sweep: RadarSweep) -> None:
    """Write a sweep as CSV + sidecar. ``repr`` floats make the round trip bit-exact."""
    path = Path(path)
    lines = [",".join(CSV_HEADER)]
    for p in sweep.points:
        vals = (*p.position, *p.velocity, p.rcs)
        lines.append(",".join(repr(float(v)) for v in vals) + f",{int(p.timestamp_us)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    save_calibration(sidecar_path(path), sweep.calibration)


def sweep_to_camera(sweep: RadarSweep, ref_ego_to_global: Pose, ref_cam_to_ego: Pose) -> Pose:
    """Pose taking this sweep's sensor frame into the reference camera frame."""
    cam_from_global = compose(invert(ref_cam_to_ego), invert(ref_ego_to_global))
    return compose(cam_from_global, compose(sweep.ego_to_global, sweep.sensor_to_ego))


def accumulate(sweeps: Sequence[RadarSweep], ref_ego_to_global: Pose, ref_cam_to_ego: Pose,
               n: int = DEFAULT_SWEEPS, compensate_velocity: bool = False,
               ref_timestamp_us: int | None = None) -> np.ndarray:
    """Bring the newest ``n`` sweeps (sorted newest first) into the reference camera frame.

    With ``compensate_velocity`` each point is first displaced in its sensor
    frame by ``(vx, vy, 0) * dt``, dt being the time from the point to
    ``ref_timestamp_us`` (defaults to the newest sweep's timestamp).
    """
    if n < 1:
        raise ValueError("sweep count n must be at least 1")
    if n > len(sweeps):
        raise ValueError(f"requested {n} sweeps but only {len(sweeps)} available")
    if ref_timestamp_us is None and sweeps:
        ref_timestamp_us = sweeps[0].timestamp_us
    chunks = []
    for sweep in sweeps[:n]:
        pts = sweep.positions
        if compensate_velocity and len(pts):
            dt = (ref_timestamp_us - sweep.point_timestamps) * 1e-6
            pts = pts.copy()
            pts[:, :2] += sweep.velocities * dt[:, None]
        chunks.append(sweep_to_camera(sweep, ref_ego_to_global, ref_cam_to_ego).apply(pts).reshape(-1, 3))
    return np.concatenate(chunks, axis=0)


def rasterize(points_cam, k: CameraIntrinsics, cap: float = DEFAULT_CAP,
              z_min: float = DEFAULT_Z_MIN) -> SparseDepthMap:
    """Project camera-frame points; the nearest return wins on shared pixels."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    u, v, z, _ = project_points(k, points_cam, z_min)
    near = z <= cap
    u, v, z = u[near], v[near], z[near]
    depth = np.full((k.height, k.width), np.inf)
    np.minimum.at(depth, (v, u), z)
    depth[np.isinf(depth)] = 0.0
    return SparseDepthMap(depth, cap)
