"""Radar depth densification: instance-guided expansion and the baseline expanders."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .depthmap import SparseDepthMap
from .geom import CameraIntrinsics
from .masks import InstanceMaskSet

JBF_MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class Raw:
    name = "raw"


@dataclass(frozen=True)
class HeightExtend:
    dh: float = 1.5
    name = "height"

    def __post_init__(self):
        if not self.dh > 0:
            raise ValueError("dh must be positive")


@dataclass(frozen=True)
class Jbf:
    radius: int = 15
    sigma_s: float = 7.0
    sigma_r: float = 12.0
    name = "jbf"

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be at least 1")
        if not (self.sigma_s > 0 and self.sigma_r > 0):
            raise ValueError("sigma_s and sigma_r must be positive")


@dataclass(frozen=True)
class Insta:
    percentile: float = 0.0
    name = "insta"

    def __post_init__(self):
        if not 0 <= self.percentile <= 100:
            raise ValueError("percentile must lie in [0, 100]")


ExpansionMethod = Union[Raw, HeightExtend, Jbf, Insta]


@dataclass(frozen=True)
class ExpansionReport:
    input_density: float
    output_density: float
    instances_total: int
    instances_filled: int

    def to_dict(self) -> dict:
        return {
            "input_density": self.input_density,
            "output_density": self.output_density,
            "instances_total": self.instances_total,
            "instances_filled": self.instances_filled,
        }


def _check_same_shape(a, b, what):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what} dimensions {b.shape[1]}x{b.shape[0]} do not match "
                         f"depth map {a.shape[1]}x{a.shape[0]}")


def dominant_depths(sparse: SparseDepthMap, masks: InstanceMaskSet,
                    percentile: float = 0.0) -> dict[int, float]:
    """Per-instance dominant depth for every instance holding at least one radar pixel.

    ``percentile=0`` gives the nearest return. Other percentiles use the
    ``lower`` rule so the result is always one of the observed depths.
    """
    _check_same_shape(sparse, masks, "mask")
    valid = sparse.valid & (masks.labels > 0)
    ids = masks.labels[valid].astype(np.int64)
    depths = sparse.depth[valid]
    if ids.size == 0:
        return {}
    if percentile == 0:
        best = np.full(int(ids.max()) + 1, np.inf)
        np.minimum.at(best, ids, depths)
        return {int(i): float(best[i]) for i in np.unique(ids)}
    order = np.argsort(ids, kind="stable")
    ids, depths = ids[order], depths[order]
    uniq, starts = np.unique(ids, return_index=True)
    groups = np.split(depths, starts[1:])
    return {int(i): float(np.percentile(g, percentile, method="lower")) for i, g in zip(uniq, groups)}


def expand_insta(sparse: SparseDepthMap, masks: InstanceMaskSet,
                 percentile: float = 0.0) -> tuple[SparseDepthMap, ExpansionReport]:
    """Fill each radar-hit instance with its nearest radar depth, then overlay the raw radar.

    Instances are written farthest-first so the nearest instance wins
    wherever regions overlap; label images cannot overlap, so with them
    the order only matters for determinism of the fill procedure.
    """
    _check_same_shape(sparse, masks, "mask")
    dom = dominant_depths(sparse, masks, percentile)
    out = np.zeros(sparse.shape)
    if dom:
        lut = np.zeros(int(masks.labels.max()) + 1)
        for inst_id, d in sorted(dom.items(), key=lambda kv: (-kv[1], kv[0])):
            lut[inst_id] = d
        out = lut[masks.labels]
    valid = sparse.valid
    out[valid] = sparse.depth[valid]
    result = SparseDepthMap(out, sparse.cap)
    report = ExpansionReport(sparse.density, result.density, len(masks.instance_ids), len(dom))
    return result, report


def height_extension_rows(v, depth, fy: float, dh: float):
    """Top row (inclusive) reached by extending a pixel upward by ``dh`` meters at ``depth``.

    Moving a camera-frame point up by ``dh`` keeps its column and lowers its
    row by ``fy * dh / depth`` pixels; the sample projecting to the top end
    is rounded like any other projection.
    """
    top = np.rint(np.asarray(v, dtype=float) - fy * dh / np.asarray(depth, dtype=float))
    return np.maximum(top, 0).astype(np.int64)


def expand_height(sparse: SparseDepthMap, k: CameraIntrinsics, dh: float = 1.5) -> SparseDepthMap:
    """Stretch every radar pixel into a vertical column spanning ``dh`` meters above it."""
    if not dh > 0:
        raise ValueError("dh must be positive")
    if (k.width, k.height) != (sparse.width, sparse.height):
        raise ValueError("intrinsics image size does not match depth map")
    vs, us = np.nonzero(sparse.valid)
    d = sparse.depth[vs, us]
    tops = height_extension_rows(vs, d, k.fy, dh)
    lengths = vs - tops + 1
    col_u = np.repeat(us, lengths)
    col_d = np.repeat(d, lengths)
    # row index within each column: top, top+1, ..., v
    offsets = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    col_v = np.repeat(tops, lengths) + offsets
    out = np.full(sparse.shape, np.inf)
    np.minimum.at(out, (col_v, col_u), col_d)
    out[np.isinf(out)] = 0.0
    out[vs, us] = d
    return SparseDepthMap(out, sparse.cap)


def expand_jbf(sparse: SparseDepthMap, guide, radius: int = 15, sigma_s: float = 7.0,
               sigma_r: float = 12.0) -> SparseDepthMap:
    """Joint bilateral filter of the sparse depth guided by a grayscale image.

    Only valid pixels contribute. Implemented as a scatter from each valid
    pixel over its window, so cost scales with radar pixels, not image size.
    """
    guide = np.asarray(guide, dtype=np.float64)
    _check_same_shape(sparse, guide, "guide")
    if radius < 1 or not (sigma_s > 0 and sigma_r > 0):
        raise ValueError("invalid JBF parameters")
    h, w = sparse.shape
    vs, us = np.nonzero(sparse.valid)
    d = sparse.depth[vs, us]
    gp = guide[vs, us]
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            qv, qu = vs + dy, us + dx
            inside = (qv >= 0) & (qv < h) & (qu >= 0) & (qu < w)
            qv, qu = qv[inside], qu[inside]
            ws = np.exp(-(dx * dx + dy * dy) / (2 * sigma_s ** 2))
            wr = np.exp(-(gp[inside] - guide[qv, qu]) ** 2 / (2 * sigma_r ** 2))
            wt = ws * wr
            # targets within one offset are distinct, so plain fancy += is safe
            num[qv, qu] += wt * d[inside]
            den[qv, qu] += wt
    out = np.zeros((h, w))
    ok = den >= JBF_MIN_WEIGHT
    out[ok] = num[ok] / den[ok]
    # a convex combination can exceed the cap only by rounding
    out = np.minimum(out, sparse.cap)
    return SparseDepthMap(out, sparse.cap)


def nearest_fill(sparse: SparseDepthMap) -> SparseDepthMap:
    """Dense map assigning every pixel the depth of its nearest radar pixel."""
    if sparse.valid_count == 0:
        return sparse
    _, (iv, iu) = ndimage.distance_transform_edt(~sparse.valid, return_indices=True)
    return SparseDepthMap(sparse.depth[iv, iu], sparse.cap)


def expand(method: ExpansionMethod, sparse: SparseDepthMap, *, masks: Optional[InstanceMaskSet] = None,
           guide=None, intrinsics: Optional[CameraIntrinsics] = None) -> SparseDepthMap:
    if isinstance(method, Raw):
        return sparse
    if isinstance(method, Insta):
        if masks is None:
            raise ValueError("insta expansion needs instance masks")
        return expand_insta(sparse, masks, method.percentile)[0]
    if isinstance(method, HeightExtend):
        if intrinsics is None:
            raise ValueError("height extension needs camera intrinsics")
        return expand_height(sparse, intrinsics, method.dh)
    if isinstance(method, Jbf):
        if guide is None:
            raise ValueError("jbf expansion needs a guide image")
        return expand_jbf(sparse, guide, method.radius, method.sigma_s, method.sigma_r)
    raise TypeError(f"unknown expansion method {method!r}")


def expansion_report(before: SparseDepthMap, after: SparseDepthMap,
                     masks: Optional[InstanceMaskSet] = None) -> ExpansionReport:
    """Report for methods that do not track instances themselves."""
    total = filled = 0
    if masks is not None:
        total = len(masks.instance_ids)
        hit = np.unique(masks.labels[before.valid & (masks.labels > 0)])
        filled = int(hit.size)
    return ExpansionReport(before.density, after.density, total, filled)
