# %% [markdown]
# # The command-line pipeline
#
# Generates a small dataset, then runs project -> expand -> eval through the
# same entry point the `instaradar` command uses.

# %%
import json
import tempfile
from pathlib import Path

from instaradar import cli

# %%
work = Path(tempfile.mkdtemp())
root = work / "data"
cli.main(["synth", "--out", str(root), "--frames", "4", "--seed", "7", "--noise", "0.3", "--clutter", "20",
          "--width", "704", "--height", "256", "--focal", "560"])
print(sorted(p.name for p in root.iterdir()))

# %%
cli.main(["project", "--root", str(root), "--out", str(work / "proj")])
cli.main(["expand", "--root", str(root), "--input", str(work / "proj"), "--out", str(work / "insta"),
          "--method", "insta", "--jobs", "2"])
cli.main(["eval", "--pred", str(work / "insta"), "--gt", str(root), "--out", str(work / "metrics.jsonl")])

# %%
for line in (work / "metrics.jsonl").read_text().splitlines():
    row = json.loads(line)
    print(f"{row['frame_id']:14s} rmse {row['rmse']:6.3f} coverage {row['coverage']:.4f}")

# %% [markdown]
# A colorized view for eyeballing:

# %%
cli.main(["render", str(work / "insta" / "frame_0000.png"), str(work / "frame_0000_color.png"), "--dilate", "2"])
print((work / "frame_0000_color.png").stat().st_size, "bytes")
