# %% [markdown]
# # Poses, projection and radar accumulation
#
# A walk through the geometry layer: compose a few poses, project points
# into a camera, and accumulate several radar sweeps into one reference frame.

# %%
import numpy as np

from instaradar.geom import CameraIntrinsics, Pose, backproject, compose, invert, project
from instaradar.radar import accumulate, rasterize
from instaradar.synth import SceneSpec, generate

# %% [markdown]
# Poses map child-frame points into the parent frame. `compose(a, b)` applies `b` first.

# %%
yaw90 = Pose.from_yaw(np.pi / 2, translation=(1.0, 0.0, 0.0))
lift_up = Pose(translation=(0.0, 0.0, 2.0))
p = compose(yaw90, lift_up)
print(p)
print("round trip:", compose(p, invert(p)))

# %% [markdown]
# Camera frame: +z forward, +y down. Pixels are rounded half to even.

# %%
k = CameraIntrinsics(1266.4, 1266.4, 816.3, 491.5, 1600, 900)
pt = backproject(k, 400.0, 300.0, 25.0)
print(pt, "->", project(k, pt))
print("behind the camera:", project(k, [0.0, 0.0, -3.0]))

# %% [markdown]
# Radar sweeps come with their own ego pose. Accumulating five of them into
# the camera frame of the newest one lines the returns back up.

# %%
scene = generate(SceneSpec(seed=3, width=800, height=450, focal=633.0))
cam = scene.camera
pts = accumulate(scene.sweeps, cam.ego_to_global, cam.sensor_to_ego, n=5)
sparse = rasterize(pts, scene.intrinsics)
print(len(pts), "points,", sparse.valid_count, "valid pixels, density", round(sparse.density, 5))
print("matches direct rasterization:", sparse == scene.expected_sparse())
