"""Geometric view transform: depth bins, frustums, lifting and pillar-style voxel pooling."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geom import CameraIntrinsics, Pose, backproject

BEVG_MAGIC = b"BEVG"
_BEVG_HEADER = struct.Struct("<4sIIIfff")


@dataclass(frozen=True)
class DepthBins:
    """Uniformly spaced depth bins between ``d_min`` and ``d_max``."""

    d_min: float = 1.0
    d_max: float = 80.0
    count: int = 118

    def __post_init__(self):
        if not self.d_min > 0:
            raise ValueError("d_min must be positive")
        if not self.d_max > self.d_min:
            raise ValueError("d_max must exceed d_min")
        if self.count < 1:
            raise ValueError("bin count must be at least 1")

    @property
    def edges(self) -> np.ndarray:
        e = np.linspace(self.d_min, self.d_max, self.count + 1)
        e[0], e[-1] = self.d_min, self.d_max
        return e

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def index(self, depth) -> np.ndarray:
        """Bin index per depth, -1 outside [d_min, d_max). Bins are half-open."""
        d = np.asarray(depth, dtype=float)
        idx = np.searchsorted(self.edges, d, side="right") - 1
        idx[(d < self.d_min) | (d >= self.d_max) | ~np.isfinite(d)] = -1
        return idx


def check_distribution(dist: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Validate an (H, W, D) categorical depth distribution.

    Each pixel must be non-negative and sum to 1; all-zero pixels are allowed
    and mean "no depth evidence" (they lift to nothing).
    """
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 3:
        raise ValueError(f"depth distribution must be (H, W, D), got shape {dist.shape}")
    if np.any(dist < 0) or not np.all(np.isfinite(dist)):
        raise ValueError("depth distribution entries must be finite and non-negative")
    s = dist.sum(axis=-1)
    if not np.all((np.abs(s - 1) <= atol) | (s == 0)):
        raise ValueError("each depth distribution must sum to 1 (or be all zero)")
    return dist


def one_hot_distribution(depth: np.ndarray, bins: DepthBins, downsample: int = 1) -> np.ndarray:
    """Depth distribution from a depth image: per feature cell, the histogram of its valid depths."""
    depth = np.asarray(depth, dtype=float)
    h, w = depth.shape
    if h % downsample or w % downsample:
        raise ValueError(f"downsample {downsample} does not divide {w}x{h}")
    gh, gw = h // downsample, w // downsample
    idx = bins.index(np.where(depth > 0, depth, np.nan))
    vs, us = np.nonzero(idx >= 0)
    cell = (vs // downsample) * gw + us // downsample
    flat = np.zeros((gh * gw, bins.count))
    np.add.at(flat, (cell, idx[vs, us]), 1.0)
    s = flat.sum(axis=1, keepdims=True)
    np.divide(flat, s, out=flat, where=s > 0)
    return flat.reshape(gh, gw, bins.count)


class Frustum(NamedTuple):
    grid_u: np.ndarray
    grid_v: np.ndarray
    bin: np.ndarray
    points: np.ndarray  # (N, 3) camera frame


def make_frustum(k: CameraIntrinsics, downsample: int, bins: DepthBins) -> Frustum:
    """Backprojected cell centers at every bin-center depth, ordered (v, u, bin)."""
    if downsample < 1 or k.width % downsample or k.height % downsample:
        raise ValueError(f"downsample {downsample} does not divide {k.width}x{k.height}")
    gw, gh = k.width // downsample, k.height // downsample
    gv, gu, b = np.meshgrid(np.arange(gh), np.arange(gw), np.arange(bins.count), indexing="ij")
    gv, gu, b = gv.ravel(), gu.ravel(), b.ravel()
    # cell center in pixel coordinates, pixel centers at integers
    pu = gu * downsample + (downsample - 1) / 2
    pv = gv * downsample + (downsample - 1) / 2
    pts = backproject(k, pu, pv, bins.centers[b])
    return Frustum(gu, gv, b, pts.reshape(-1, 3))


def lift(features: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Outer product per pixel: (H, W, C) x (H, W, D) -> (H, W, D, C)."""
    features = np.asarray(features, dtype=float)
    dist = check_distribution(dist)
    if features.shape[:2] != dist.shape[:2]:
        raise ValueError(f"feature grid {features.shape[:2]} does not match distribution grid {dist.shape[:2]}")
    return dist[..., :, None] * features[..., None, :]


@dataclass(frozen=True)
class BevGridSpec:
    x_min: float = -51.2
    x_max: float = 51.2
    y_min: float = -51.2
    y_max: float = 51.2
    resolution: float = 0.8

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        for lo, hi in ((self.x_min, self.x_max), (self.y_min, self.y_max)):
            if not hi > lo:
                raise ValueError("grid max must exceed min")
            cells = (hi - lo) / self.resolution
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValueError(f"extent {hi - lo} is not a multiple of resolution {self.resolution}")

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.resolution))

    @property
    def ny(self) -> int:
        return int(round((self.y_max - self.y_min) / self.resolution))

    def cell_index(self, xy: np.ndarray):
        """(ix, iy, inside) for ego-frame (x, y) coordinates, half-open cells."""
        xy = np.asarray(xy, dtype=float)
        ix = np.floor((xy[:, 0] - self.x_min) / self.resolution)
        iy = np.floor((xy[:, 1] - self.y_min) / self.resolution)
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny) & np.all(np.isfinite(xy), axis=1)
        return ix.astype(np.int64, copy=False), iy.astype(np.int64, copy=False), inside


@dataclass(frozen=True, eq=False)
class BevGrid:
    spec: BevGridSpec
    cells: np.ndarray  # (X, Y, C)

    @property
    def channels(self) -> int:
        return self.cells.shape[2]


def voxel_pool(points_cam: np.ndarray, features: np.ndarray, cam_to_ego: Pose,
               spec: BevGridSpec) -> BevGrid:
    """Sum per-point features into the BEV cell under each point; height is ignored.

    Summation runs in input order so results are bit-reproducible.
    """
    pts = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.ndim != 2 or feats.shape[0] != len(pts):
        raise ValueError(f"expected ({len(pts)}, C) features, got shape {feats.shape}")
    c = feats.shape[1]
    ego = cam_to_ego.apply(pts)
    ix, iy, inside = spec.cell_index(ego[:, :2])
    inside &= np.all(np.isfinite(feats), axis=1)
    flat_idx = ix[inside] * spec.ny + iy[inside]
    f = feats[inside]
    n = spec.nx * spec.ny
    cells = np.empty((n, c))
    for ch in range(c):
        cells[:, ch] = np.bincount(flat_idx, weights=f[:, ch], minlength=n)
    return BevGrid(spec, cells.reshape(spec.nx, spec.ny, c))


def voxel_pool_sharded(points_cam: np.ndarray, features: np.ndarray, cam_to_ego: Pose,
                       spec: BevGridSpec, shards: int) -> BevGrid:
    """Pool disjoint shards independently and merge by cell-wise addition."""
    pts = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 1:
        feats = feats[:, None]
    parts = [voxel_pool(p, f, cam_to_ego, spec)
             for p, f in zip(np.array_split(pts, shards), np.array_split(feats, shards))]
    return merge_grids(parts)


def merge_grids(grids: Sequence[BevGrid]) -> BevGrid:
    spec = grids[0].spec
    total = np.zeros_like(grids[0].cells)
    for g in grids:
        if g.spec != spec:
            raise ValueError("cannot merge grids with different specs")
        total = total + g.cells
    return BevGrid(spec, total)


def lift_and_pool(k: CameraIntrinsics, downsample: int, bins: DepthBins, features: np.ndarray,
                  dist: np.ndarray, cam_to_ego: Pose, spec: BevGridSpec) -> BevGrid:
    frustum = make_frustum(k, downsample, bins)
    lifted = lift(features, dist)
    return voxel_pool(frustum.points, lifted.reshape(-1, lifted.shape[-1]), cam_to_ego, spec)


def write_bevg(path, grid: BevGrid) -> None:
    """Flat little-endian binary: header then X*Y*C float32 values, x-major."""
    nx, ny, c = grid.cells.shape
    s = grid.spec
    header = _BEVG_HEADER.pack(BEVG_MAGIC, nx, ny, c, s.x_min, s.y_min, s.resolution)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(grid.cells, dtype="<f4").tobytes())


def read_bevg(path) -> BevGrid:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _BEVG_HEADER.size:
        raise ValueError(f"{path}: truncated BEVG header")
    magic, nx, ny, c, x_min, y_min, res = _BEVG_HEADER.unpack_from(data)
    if magic != BEVG_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = data[_BEVG_HEADER.size:]
    if len(body) != nx * ny * c * 4:
        raise ValueError(f"{path}: expected {nx * ny * c} floats, found {len(body) // 4}")
    cells = np.frombuffer(body, dtype="<f4").reshape(nx, ny, c).astype(np.float64)
    x_min, y_min, res = (float(np.float32(v)) for v in (x_min, y_min, res))
    spec = BevGridSpec(x_min, x_min + nx * res, y_min, y_min + ny * res, res)
    return BevGrid(spec, cells)
