"""Depth metrics (AbsRel, RMSE, coverage) and the 16-bit depth PNG format.

Metrics are computed on the intersection of prediction and ground-truth
validity, after both maps are restricted to (0, cap]. Coverage reports how
much of the ground truth that intersection covers, so sparse predictions
are not silently flattered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .depthmap import DEFAULT_CAP, SparseDepthMap

DEPTH_SCALE = 256.0
MAX_STORED = 65535


class DepthFormatError(ValueError):
    pass


class EmptyEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSums:
    """Additive per-frame accumulators; pooled metrics come from summing these."""

    abs_rel_sum: float = 0.0
    sq_err_sum: float = 0.0
    abs_err_sum: float = 0.0
    evaluated: int = 0
    gt_valid: int = 0

    def __add__(self, other: "MetricSums") -> "MetricSums":
        return MetricSums(self.abs_rel_sum + other.abs_rel_sum, self.sq_err_sum + other.sq_err_sum,
                          self.abs_err_sum + other.abs_err_sum, self.evaluated + other.evaluated,
                          self.gt_valid + other.gt_valid)


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    rmse: float
    evaluated_pixels: int
    coverage: float
    cap: float
    mae: float = 0.0

    def to_dict(self) -> dict:
        return {"abs_rel": self.abs_rel, "rmse": self.rmse, "mae": self.mae,
                "evaluated_pixels": self.evaluated_pixels, "coverage": self.coverage, "cap": self.cap}


def _joint(pred: SparseDepthMap, gt: SparseDepthMap, cap: float):
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.width}x{pred.height} and ground truth "
                         f"{gt.width}x{gt.height} differ in size")
    p, g = pred.depth, gt.depth
    gt_ok = (g > 0) & (g <= cap)
    joint = gt_ok & (p > 0) & (p <= cap)
    return p[joint], g[joint], int(np.count_nonzero(gt_ok))


def metric_sums(pred: SparseDepthMap, gt: SparseDepthMap, cap: float = DEFAULT_CAP) -> MetricSums:
    p, g, n_gt = _joint(pred, gt, cap)
    err = p - g
    return MetricSums(float(np.sum(np.abs(err) / g)), float(np.sum(err * err)),
                      float(np.sum(np.abs(err))), int(p.size), n_gt)


def report_from_sums(s: MetricSums, cap: float = DEFAULT_CAP) -> MetricReport:
    if s.evaluated == 0:
        raise EmptyEvaluationError("no pixel is valid in both prediction and ground truth")
    return MetricReport(s.abs_rel_sum / s.evaluated, math.sqrt(s.sq_err_sum / s.evaluated),
                        s.evaluated, s.evaluated / s.gt_valid, cap, s.abs_err_sum / s.evaluated)


def abs_rel(pred: SparseDepthMap, gt: SparseDepthMap, cap: float = DEFAULT_CAP) -> float:
    return evaluate(pred, gt, cap).abs_rel


def rmse(pred: SparseDepthMap, gt: SparseDepthMap, cap: float = DEFAULT_CAP) -> float:
    return evaluate(pred, gt, cap).rmse


def evaluate(pred: SparseDepthMap, gt: SparseDepthMap, cap: float = DEFAULT_CAP) -> MetricReport:
    return report_from_sums(metric_sums(pred, gt, cap), cap)


def aggregate(sums: Iterable[MetricSums], cap: float = DEFAULT_CAP) -> MetricReport:
    """Pool per-frame sums (not a mean of per-frame means)."""
    total = MetricSums()
    for s in sums:
        total = total + s
    return report_from_sums(total, cap)


def encode_depth(depth_map: SparseDepthMap) -> np.ndarray:
    d = depth_map.depth
    stored = np.rint(d * DEPTH_SCALE)
    if np.any(stored > MAX_STORED):
        raise DepthFormatError(f"depth {d.max():.3f} m exceeds the format limit of "
                               f"{MAX_STORED / DEPTH_SCALE:.3f} m")
    # keep tiny valid depths valid instead of letting them round to the invalid code
    stored[(d > 0) & (stored == 0)] = 1
    return stored.astype(np.uint16)


def write_depth_png(path, depth_map: SparseDepthMap) -> None:
    """16-bit grayscale PNG storing ``round(depth * 256)``; 0 is invalid."""
    Image.fromarray(encode_depth(depth_map)).save(Path(path), format="PNG")


def read_depth_png(path, cap: float = DEFAULT_CAP) -> SparseDepthMap:
    """Inverse of :func:`write_depth_png`; depths beyond ``cap`` are dropped."""
    try:
        with Image.open(path) as img:
            img.load()
            if len(img.getbands()) != 1 or not (img.mode.startswith("I;16") or img.mode == "I"):
                raise DepthFormatError(f"{path}: expected a 16-bit single-channel PNG, got mode {img.mode}")
            stored = np.asarray(img).astype(np.float64)
    except DepthFormatError:
        raise
    except (OSError, SyntaxError, ValueError) as e:
        raise DepthFormatError(f"{path}: unreadable depth PNG ({e})") from e
    return SparseDepthMap.from_array(stored / DEPTH_SCALE, cap)
