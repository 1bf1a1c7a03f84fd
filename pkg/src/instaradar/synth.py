"""Synthetic scenes with exactly known depth for end-to-end checks.

Objects are fronto-parallel rectangles at constant depth, so instance
expansion has an analytically exact answer. All coordinates the generator
emits are multiples of 1/256 m and the camera/radar mounts are axis
permutations, so with zero noise the full sensor -> ego -> global -> camera
chain reproduces object depths bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .depthmap import DEFAULT_CAP, SparseDepthMap
from .geom import Calibration, CameraIntrinsics, Pose, compose, invert, save_calibration
from .masks import InstanceMaskSet, save_masks
from .metrics import write_depth_png
from .radar import RadarPoint, RadarSweep, rasterize, write_sweep

GRID = 1.0 / 256.0
SWEEP_INTERVAL_US = 62_500
MAX_RESAMPLE = 100

# camera +z forward, +x right, +y down  ->  ego +x forward, +y left, +z up
CAM_TO_EGO = Pose([0.5, -0.5, 0.5, -0.5], [1.5, 0.0, 1.5])
RADAR_TO_EGO = Pose([1.0, 0.0, 0.0, 0.0], [3.5, 0.0, 0.5])


def _snap(x):
    return np.round(np.asarray(x, dtype=float) / GRID) * GRID


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    object_count: int = 6
    depth_range: tuple = (5.0, 60.0)
    radar_points_per_object: int = 8
    radar_noise_sigma: float = 0.0
    ego_speed: float = 8.0
    sweep_count: int = 5
    width: int = 1600
    height: int = 900
    focal: float = 1266.0
    cap: float = DEFAULT_CAP
    clutter_per_sweep: int = 0

    def __post_init__(self):
        lo, hi = self.depth_range
        if not (0 < lo <= hi <= self.cap):
            raise ValueError(f"depth_range {self.depth_range} must lie within (0, {self.cap}]")
        if min(self.object_count, self.radar_points_per_object, self.clutter_per_sweep) < 0:
            raise ValueError("counts must be non-negative")
        if self.sweep_count < 1:
            raise ValueError("sweep_count must be at least 1")
        if self.radar_noise_sigma < 0 or self.ego_speed < 0:
            raise ValueError("noise sigma and ego speed must be non-negative")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.focal, self.width / 2, self.height / 2,
                                self.width, self.height)


@dataclass(frozen=True)
class SceneObject:
    instance_id: int
    depth: float
    rect: tuple  # (u0, v0, u1, v1) inclusive, clipped to the image
    intensity: int


@dataclass(frozen=True, eq=False)
class Scene:
    spec: SceneSpec
    sweeps: list  # newest first
    camera: Calibration
    masks: InstanceMaskSet
    gt: SparseDepthMap
    guide: np.ndarray
    objects: list = field(default_factory=list)
    points_cam: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.camera.intrinsics

    def expected_sparse(self) -> SparseDepthMap:
        """Raw radar depth map, rasterized straight from reference-camera coordinates."""
        return rasterize(self.points_cam, self.intrinsics, self.spec.cap)


def _sample_object(rng, spec: SceneSpec, instance_id: int) -> SceneObject:
    k = spec.intrinsics
    lo, hi = spec.depth_range
    for _ in range(MAX_RESAMPLE):
        depth = float(np.clip(_snap(rng.uniform(lo, hi)), lo, hi))
        w_m, h_m = rng.uniform(0.8, 4.5), rng.uniform(1.0, 3.0)
        uc, vc = rng.uniform(-0.1, 1.1) * k.width, rng.uniform(-0.1, 1.1) * k.height
        pw, ph = k.fx * w_m / (2 * depth), k.fy * h_m / (2 * depth)
        u0, u1 = max(int(np.ceil(uc - pw)), 0), min(int(np.floor(uc + pw)), k.width - 1)
        v0, v1 = max(int(np.ceil(vc - ph)), 0), min(int(np.floor(vc + ph)), k.height - 1)
        if u0 <= u1 and v0 <= v1:
            return SceneObject(instance_id, depth, (u0, v0, u1, v1), int(rng.integers(120, 251)))
    raise RuntimeError(f"could not place object {instance_id} inside the image after {MAX_RESAMPLE} tries")


def _sample_radar_points(rng, spec: SceneSpec, obj: SceneObject, labels: np.ndarray) -> np.ndarray:
    """Camera-frame radar returns on the visible part of one object."""
    k = spec.intrinsics
    vs, us = np.nonzero(labels == obj.instance_id)
    pts = []
    if vs.size == 0:
        return np.zeros((0, 3))
    for _ in range(spec.radar_points_per_object):
        for _attempt in range(20):
            i = rng.integers(vs.size)
            x = _snap((us[i] - k.cx) / k.fx * obj.depth)
            y = _snap((vs[i] - k.cy) / k.fy * obj.depth)
            u = round(k.fx * x / obj.depth + k.cx)
            v = round(k.fy * y / obj.depth + k.cy)
            if 0 <= u < k.width and 0 <= v < k.height and labels[v, u] == obj.instance_id:
                break
        else:
            continue
        p = np.array([x, y, obj.depth])
        if spec.radar_noise_sigma > 0:
            # range noise moves the return along its viewing ray
            z = max(obj.depth + rng.normal(0.0, spec.radar_noise_sigma), GRID)
            p = p * (z / obj.depth)
        pts.append(p)
    return np.array(pts, dtype=float).reshape(-1, 3)


def _sample_clutter(rng, spec: SceneSpec, labels: np.ndarray) -> np.ndarray:
    """Background returns (ground, buildings) on non-instance pixels at depths up to the cap."""
    k = spec.intrinsics
    pts = []
    for _ in range(spec.clutter_per_sweep * spec.sweep_count):
        u, v = int(rng.integers(k.width)), int(rng.integers(k.height))
        z = float(_snap(rng.uniform(spec.depth_range[0], spec.cap)))
        x = _snap((u - k.cx) / k.fx * z)
        y = _snap((v - k.cy) / k.fy * z)
        pu, pv = round(k.fx * x / z + k.cx), round(k.fy * y / z + k.cy)
        if 0 <= pu < k.width and 0 <= pv < k.height and labels[pv, pu] == 0:
            pts.append((float(x), float(y), z))
    return np.array(pts, dtype=float).reshape(-1, 3)


def generate(spec: SceneSpec) -> Scene:
    """Build one scene; identical specs give bit-identical scenes."""
    rng = np.random.default_rng(spec.seed)
    k = spec.intrinsics

    objects = [_sample_object(rng, spec, i + 1) for i in range(spec.object_count)]
    labels = np.zeros((k.height, k.width), dtype=np.uint16)
    guide = np.full((k.height, k.width), 96, dtype=np.uint8)
    gt = np.zeros((k.height, k.width))
    # far to near: nearer objects occlude farther ones
    for obj in sorted(objects, key=lambda o: (-o.depth, o.instance_id)):
        u0, v0, u1, v1 = obj.rect
        labels[v0:v1 + 1, u0:u1 + 1] = obj.instance_id
        guide[v0:v1 + 1, u0:u1 + 1] = obj.intensity
        gt[v0:v1 + 1, u0:u1 + 1] = obj.depth

    # ego drives along global +x; sweep i is i intervals older than the reference
    step = float(_snap(spec.ego_speed * SWEEP_INTERVAL_US * 1e-6))
    origin = np.array([float(_snap(rng.uniform(-500, 500))), float(_snap(rng.uniform(-500, 500))), 0.0])
    t_ref = 1_000_000_000 + int(rng.integers(0, 1_000_000))
    ego_poses = [Pose([1.0, 0.0, 0.0, 0.0], origin - [i * step, 0.0, 0.0]) for i in range(spec.sweep_count)]
    stamps = [t_ref - i * SWEEP_INTERVAL_US for i in range(spec.sweep_count)]

    per_sweep = [[] for _ in range(spec.sweep_count)]
    all_cam = []
    cam_to_global = compose(ego_poses[0], CAM_TO_EGO)
    for obj in objects:
        pts_cam = _sample_radar_points(rng, spec, obj, labels)
        all_cam.append(pts_cam)
        for j, p in enumerate(pts_cam):
            per_sweep[j % spec.sweep_count].append(p)
    if spec.clutter_per_sweep:
        clutter = _sample_clutter(rng, spec, labels)
        all_cam.append(clutter)
        for j, p in enumerate(clutter):
            per_sweep[j % spec.sweep_count].append(p)

    sweeps = []
    for s in range(spec.sweep_count):
        to_sensor = compose(invert(RADAR_TO_EGO), compose(invert(ego_poses[s]), cam_to_global))
        pts = to_sensor.apply(np.array(per_sweep[s]).reshape(-1, 3))
        rcs = _snap(rng.normal(5.0, 5.0, size=len(pts)))
        points = [RadarPoint(tuple(p), (0.0, 0.0), float(r), stamps[s]) for p, r in zip(pts, rcs)]
        sweeps.append(RadarSweep(points, RADAR_TO_EGO, ego_poses[s], stamps[s]))

    camera = Calibration(CAM_TO_EGO, ego_poses[0], stamps[0], k)
    points_cam = np.concatenate(all_cam, axis=0) if all_cam else np.zeros((0, 3))
    return Scene(spec, sweeps, camera, InstanceMaskSet(labels), SparseDepthMap(gt, spec.cap),
                 guide, objects, points_cam)


def write_scene(frame_dir, scene: Scene) -> Path:
    """Write one frame in the dataset layout the CLI reads."""
    frame_dir = Path(frame_dir)
    (frame_dir / "radar").mkdir(parents=True, exist_ok=True)
    Image.fromarray(scene.guide).save(frame_dir / "camera.png", format="PNG")
    save_masks(frame_dir / "masks.png", scene.masks)
    write_depth_png(frame_dir / "gt_depth.png", scene.gt)
    save_calibration(frame_dir / "calib.json", scene.camera)
    for i, sweep in enumerate(scene.sweeps):
        write_sweep(frame_dir / "radar" / f"sweep_{i:02d}.csv", sweep)
    return frame_dir


def write_dataset(root, spec: SceneSpec, frames: int) -> list[str]:
    """``frames`` scenes seeded ``spec.seed + i`` under ``root/frame_XXXX``."""
    root = Path(root)
    ids = []
    for i in range(frames):
        fid = f"frame_{i:04d}"
        scene = generate(replace(spec, seed=spec.seed + i))
        write_scene(root / fid, scene)
        ids.append(fid)
    return ids

