"""Instance-guided radar depth expansion and the geometry around it."""
from .depthmap import SparseDepthMap
from .expand import (ExpansionReport, HeightExtend, Insta, Jbf, Raw, expand_height,
                     expand_insta, expand_jbf)
from .geom import CameraIntrinsics, Calibration, PixelDepth, Pose, backproject, project
from .masks import Instance, InstanceMaskSet, load_masks, save_masks
from .metrics import MetricReport, evaluate, read_depth_png, write_depth_png
from .radar import RadarPoint, RadarSweep, accumulate, parse_sweep, rasterize, write_sweep

__version__ = "0.1.0"
