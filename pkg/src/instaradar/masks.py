"""Instance label images: 16-bit PNGs where each pixel holds an instance ID (0 = background)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image


class MaskFormatError(ValueError):
    pass


class MaskSizeError(MaskFormatError):
    pass


class MaskBitDepthError(MaskFormatError):
    pass


class MaskChannelError(MaskFormatError):
    pass


_MULTI_CHANNEL = {"LA", "La", "RGB", "RGBA", "RGBa", "RGBX", "CMYK", "YCbCr", "LAB", "HSV", "PA"}


@dataclass(frozen=True, eq=False)
class InstanceMaskSet:
    labels: np.ndarray
    class_names: dict = field(default_factory=dict)

    def __post_init__(self):
        lab = np.array(self.labels)
        if lab.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {lab.shape}")
        if lab.size and (lab.min() < 0 or lab.max() > 65535):
            raise ValueError("instance IDs must lie in [0, 65535]")
        lab = lab.astype(np.uint16)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        ids = np.unique(lab)
        object.__setattr__(self, "instance_ids", [int(i) for i in ids if i != 0])

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape

    def crop(self, x0: int, y0: int, width: int, height: int) -> "InstanceMaskSet":
        return InstanceMaskSet(self.labels[y0:y0 + height, x0:x0 + width], dict(self.class_names))

    def __eq__(self, other):
        if not isinstance(other, InstanceMaskSet):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class Instance:
    id: int
    pixel_count: int
    bbox: tuple  # (u_min, v_min, u_max, v_max), inclusive


def load_masks(path, expected_size=None) -> InstanceMaskSet:
    """Load a 16-bit single-channel label PNG. ``expected_size`` is ``(width, height)``."""
    path = Path(path)
    with Image.open(path) as img:
        mode = img.mode
        if mode in _MULTI_CHANNEL or len(img.getbands()) > 1:
            raise MaskChannelError(f"{path}: expected a single-channel image, got mode {mode}")
        if not mode.startswith("I;16") and mode != "I":
            raise MaskBitDepthError(f"{path}: expected 16-bit grayscale, got mode {mode}")
        if expected_size is not None and tuple(img.size) != tuple(expected_size):
            raise MaskSizeError(f"{path}: size {img.size[0]}x{img.size[1]} does not match "
                                f"expected {expected_size[0]}x{expected_size[1]}")
        labels = np.asarray(img).astype(np.uint16)
    names = {}
    side = path.with_suffix(".json")
    if side.exists():
        names = {int(k): v for k, v in json.loads(side.read_text(encoding="utf-8")).items()}
    return InstanceMaskSet(labels, names)


def save_masks(path, masks: InstanceMaskSet) -> None:
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(masks.labels, dtype=np.uint16)).save(path, format="PNG")
    if masks.class_names:
        side = {str(k): v for k, v in sorted(masks.class_names.items())}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")


def instances(masks: InstanceMaskSet) -> list[Instance]:
    """Pixel count and tight inclusive bbox for each instance, ordered by ID."""
    lab = masks.labels
    if not masks.instance_ids:
        return []
    vs, us = np.nonzero(lab)
    ids = lab[vs, us].astype(np.int64)
    n = int(lab.max()) + 1
    counts = np.bincount(ids, minlength=n)
    umin = np.full(n, np.iinfo(np.int64).max)
    vmin = np.full(n, np.iinfo(np.int64).max)
    umax = np.full(n, -1)
    vmax = np.full(n, -1)
    np.minimum.at(umin, ids, us)
    np.minimum.at(vmin, ids, vs)
    np.maximum.at(umax, ids, us)
    np.maximum.at(vmax, ids, vs)
    return [Instance(i, int(counts[i]), (int(umin[i]), int(vmin[i]), int(umax[i]), int(vmax[i])))
            for i in masks.instance_ids]


def region_pixels(masks: InstanceMaskSet, instance_id: int) -> Iterator[tuple[int, int]]:
    """Yield ``(u, v)`` for every pixel of one instance, row-major."""
    if instance_id not in masks.instance_ids:
        raise KeyError(f"unknown instance id {instance_id}")
    vs, us = np.nonzero(masks.labels == instance_id)
    for v, u in zip(vs.tolist(), us.tolist()):
        yield u, v
