"""The sparse depth map shared by projection, expansion and evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CAP = 80.0


@dataclass(frozen=True, eq=False)
class SparseDepthMap:
    """H x W depth grid in meters; 0 marks an invalid pixel.

    Every stored depth lies in (0, cap].
    """

    depth: np.ndarray
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        d = np.array(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {d.shape}")
        if not self.cap > 0:
            raise ValueError("cap must be positive")
        if not np.all(np.isfinite(d)):
            raise ValueError("depth contains non-finite values")
        if np.any(d < 0) or np.any(d > self.cap):
            raise ValueError(f"depths must lie in (0, {self.cap}] or be 0 (invalid)")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "cap", float(self.cap))

    @classmethod
    def empty(cls, width: int, height: int, cap: float = DEFAULT_CAP) -> "SparseDepthMap":
        return cls(np.zeros((height, width)), cap)

    @classmethod
    def from_array(cls, depth, cap: float = DEFAULT_CAP) -> "SparseDepthMap":
        """Build a map from arbitrary values; non-finite, non-positive and over-cap depths become invalid."""
        d = np.array(depth, dtype=np.float64)
        bad = ~np.isfinite(d) | (d <= 0) | (d > cap)
        d[bad] = 0.0
        return cls(d, cap)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self):
        return self.depth.shape

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.depth))

    @property
    def density(self) -> float:
        return self.valid_count / self.depth.size

    def with_cap(self, cap: float) -> "SparseDepthMap":
        return SparseDepthMap.from_array(self.depth, cap)

    def crop(self, x0: int, y0: int, width: int, height: int) -> "SparseDepthMap":
        if x0 < 0 or y0 < 0 or x0 + width > self.width or y0 + height > self.height:
            raise ValueError(
                f"crop {width}x{height}+{x0}+{y0} exceeds map size {self.width}x{self.height}")
        return SparseDepthMap(self.depth[y0:y0 + height, x0:x0 + width], self.cap)

    def __eq__(self, other):
        if not isinstance(other, SparseDepthMap):
            return NotImplemented
        return self.cap == other.cap and np.array_equal(self.depth, other.depth)

    def __repr__(self):
        return f"SparseDepthMap({self.width}x{self.height}, valid={self.valid_count}, cap={self.cap})"
