# %% [markdown]
# # Lifting an expanded depth map into bird's-eye view
#
# The depth map becomes a per-cell categorical distribution over depth bins.
# Features are spread along each camera ray by that distribution and summed
# into BEV pillars.

# %%
import numpy as np

from instaradar.bev import BevGridSpec, DepthBins, lift, lift_and_pool, make_frustum, one_hot_distribution
from instaradar.expand import expand_insta
from instaradar.radar import accumulate, rasterize
from instaradar.synth import SceneSpec, generate

# %%
scene = generate(SceneSpec(seed=5, width=704, height=256, focal=560.0))
pts = accumulate(scene.sweeps, scene.camera.ego_to_global, scene.camera.sensor_to_ego, 5)
dense, _ = expand_insta(rasterize(pts, scene.intrinsics), scene.masks)

bins = DepthBins(1.0, 80.0, 118)
dist = one_hot_distribution(dense.depth, bins, downsample=16)
feats = np.ones(dist.shape[:2] + (1,))
print("distribution grid", dist.shape, "cells with depth:", int((dist.sum(-1) > 0).sum()))

# %% [markdown]
# Lifting keeps each pixel's feature mass: summing over bins gives the
# feature back wherever the distribution is non-empty.

# %%
lifted = lift(feats, dist)
print("lift sums:", np.unique(lifted.sum(axis=2)))

# %%
spec = BevGridSpec()
grid = lift_and_pool(scene.intrinsics, 16, bins, feats, dist, scene.camera.sensor_to_ego, spec)
print("grid", grid.cells.shape, "total mass", grid.cells.sum(), "occupied cells", int((grid.cells > 0).sum()))
ix, iy = np.nonzero(grid.cells[..., 0])
print("occupied x range (m):", spec.x_min + ix.min() * spec.resolution, spec.x_min + (ix.max() + 1) * spec.resolution)
print("frustum points:", len(make_frustum(scene.intrinsics, 16, bins).points))
