# %% [markdown]
# # Metrics and the depth PNG format

# %%
import os
import tempfile

import numpy as np

from instaradar.depthmap import SparseDepthMap
from instaradar.metrics import aggregate, evaluate, metric_sums, read_depth_png, write_depth_png

# %% [markdown]
# Metrics use only pixels valid in both maps. Coverage says how much of the
# ground truth that was.

# %%
gt = SparseDepthMap(np.array([[10.0, 20.0], [0.0, 40.0]]))
pred = SparseDepthMap(np.array([[11.0, 0.0], [5.0, 36.0]]))
print(evaluate(pred, gt))

# %% [markdown]
# Aggregation pools sums over frames, so a frame with many pixels weighs more
# than one with few.

# %%
rng = np.random.default_rng(0)
frames = []
for n in (4, 400):
    g = rng.uniform(5, 60, (1, n))
    frames.append(metric_sums(SparseDepthMap(g + rng.normal(0, 1, g.shape).clip(-4, 4)), SparseDepthMap(g)))
print("pooled:", aggregate(frames))

# %% [markdown]
# Depth PNGs store `round(d * 256)` in 16 bits, so a round trip moves a
# depth by at most 1/512 m.

# %%
d = SparseDepthMap(rng.uniform(0.5, 80, (8, 8)))
path = os.path.join(tempfile.mkdtemp(), "depth.png")
write_depth_png(path, d)
back = read_depth_png(path)
print("max round-trip error:", np.abs(back.depth - d.depth).max(), "<=", 1 / 512)
