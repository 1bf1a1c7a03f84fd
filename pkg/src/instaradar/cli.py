"""Command-line pipeline over a frame dataset.

Dataset layout::

    <root>/<frame_id>/camera.png
                      masks.png
                      gt_depth.png
                      calib.json
                      radar/sweep_00.csv (+ sweep_00.json), sweep_01.csv, ...   newest first

Depth outputs are flat: ``<out>/<frame_id>.png``.
Exit codes: 0 success, 1 some frame failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import bev, expand as ex, metrics, synth
from .depthmap import SparseDepthMap
from .geom import load_calibration
from .masks import load_masks
from .radar import accumulate, parse_sweep, rasterize

log = logging.getLogger("instaradar")

DEFAULTS = {
    "sweeps": 5,
    "cap": 80.0,
    "method": "insta",
    "dh": 1.5,
    "radius": 15,
    "sigma_s": 7.0,
    "sigma_r": 12.0,
    "crop": None,
    "jobs": 1,
}
AGGREGATE_ID = "__aggregate__"
_CROP_RE = re.compile(r"^(\d+)x(\d+)(?:\+(\d+)\+(\d+))?$")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    camera_image: Path
    radar_sweeps: tuple
    masks: Path
    gt_depth: Path
    calib: Path

    @classmethod
    def from_dir(cls, frame_dir) -> "FrameRecord":
        d = Path(frame_dir)
        sweeps = tuple(sorted((d / "radar").glob("sweep_*.csv")))
        return cls(d.name, d / "camera.png", sweeps, d / "masks.png", d / "gt_depth.png", d / "calib.json")


@dataclass(frozen=True)
class Crop:
    width: int
    height: int
    x0: int | None = None
    y0: int | None = None

    def offset(self, width: int, height: int) -> tuple[int, int]:
        """Top-left corner; defaults to horizontally centered and bottom-aligned."""
        x0 = (width - self.width) // 2 if self.x0 is None else self.x0
        y0 = height - self.height if self.y0 is None else self.y0
        return x0, y0

    def apply(self, obj):
        x0, y0 = self.offset(obj.width, obj.height)
        return obj.crop(x0, y0, self.width, self.height)


def parse_crop(text) -> Crop | None:
    if text is None or str(text).lower() == "none":
        return None
    m = _CROP_RE.match(str(text))
    if not m:
        raise ConfigError(f"bad crop {text!r}, expected WxH or WxH+X+Y")
    w, h, x, y = m.groups()
    return Crop(int(w), int(h), None if x is None else int(x), None if y is None else int(y))


@dataclass(frozen=True)
class PipelineConfig:
    sweeps: int = 5
    cap: float = 80.0
    method: str = "insta"
    dh: float = 1.5
    radius: int = 15
    sigma_s: float = 7.0
    sigma_r: float = 12.0
    crop: Crop | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.sweeps < 1:
            raise ConfigError("sweeps must be at least 1")
        if not self.cap > 0:
            raise ConfigError("cap must be positive")
        if self.method not in ("raw", "height", "jbf", "insta"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        try:
            self.expansion_method()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def expansion_method(self):
        if self.method == "raw":
            return ex.Raw()
        if self.method == "height":
            return ex.HeightExtend(self.dh)
        if self.method == "jbf":
            return ex.Jbf(self.radius, self.sigma_s, self.sigma_r)
        return ex.Insta()


def build_config(args) -> PipelineConfig:
    """Defaults, then the JSON config file, then explicit command-line flags."""
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        unknown = set(loaded) - set(DEFAULTS) - {"root", "out", "input"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in loaded.items() if k in DEFAULTS})
        for key in ("root", "out", "input"):
            if key in loaded and getattr(args, key, None) is None:
                setattr(args, key, loaded[key])
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        values["crop"] = parse_crop(values["crop"])
        return PipelineConfig(int(values["sweeps"]), float(values["cap"]), str(values["method"]),
                              float(values["dh"]), int(values["radius"]), float(values["sigma_s"]),
                              float(values["sigma_r"]), values["crop"], int(values["jobs"]))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def discover_frames(root) -> list[FrameRecord]:
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} is not a directory")
    return [FrameRecord.from_dir(d) for d in sorted(root.iterdir()) if d.is_dir()]


def _run_frames(fn, tasks, jobs):
    """Apply ``fn`` to every task; results come back in task order regardless of ``jobs``."""
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _guarded(fn, frame_id, *args):
    try:
        return frame_id, fn(*args), None
    except Exception as e:  # per-frame failures are reported, not fatal
        return frame_id, None, f"{type(e).__name__}: {e}"


def project_frame(frame: FrameRecord, cfg: PipelineConfig, crop_output: bool = True) -> SparseDepthMap:
    if not frame.calib.exists():
        raise FileNotFoundError(f"frame {frame.frame_id}: missing calibration {frame.calib}")
    calib = load_calibration(frame.calib)
    if calib.intrinsics is None:
        raise ValueError(f"frame {frame.frame_id}: camera calibration lacks intrinsics")
    if len(frame.radar_sweeps) < cfg.sweeps:
        raise ValueError(f"frame {frame.frame_id}: {len(frame.radar_sweeps)} sweeps, need {cfg.sweeps}")
    sweeps = [parse_sweep(p) for p in frame.radar_sweeps[:cfg.sweeps]]
    pts = accumulate(sweeps, calib.ego_to_global, calib.sensor_to_ego, cfg.sweeps)
    sparse = rasterize(pts, calib.intrinsics, cfg.cap)
    if crop_output and cfg.crop is not None:
        sparse = cfg.crop.apply(sparse)
    return sparse


def _project_task(task):
    frame, cfg, out = task

    def work():
        sparse = project_frame(frame, cfg)
        metrics.write_depth_png(Path(out) / f"{frame.frame_id}.png", sparse)
    return _guarded(work, frame.frame_id)


def expand_frame(frame: FrameRecord, cfg: PipelineConfig, input_dir=None):
    """Expand one frame at full resolution, then crop. Returns (map, report)."""
    if input_dir is not None:
        sparse = metrics.read_depth_png(Path(input_dir) / f"{frame.frame_id}.png", cfg.cap)
    else:
        sparse = project_frame(frame, cfg, crop_output=False)
    method = cfg.expansion_method()
    masks = guide = intr = None
    if isinstance(method, ex.Insta) or frame.masks.exists():
        masks = load_masks(frame.masks)
    if isinstance(method, ex.Jbf):
        with Image.open(frame.camera_image) as img:
            guide = np.asarray(img.convert("L"), dtype=np.float64)
    if isinstance(method, ex.HeightExtend):
        intr = load_calibration(frame.calib).intrinsics

    if masks is not None and masks.shape != sparse.shape:
        # input maps were cropped already; bring full-size side inputs to the same window
        if cfg.crop is None or (cfg.crop.width, cfg.crop.height) != (sparse.width, sparse.height):
            raise ValueError(f"frame {frame.frame_id}: masks {masks.width}x{masks.height} "
                             f"do not match depth {sparse.width}x{sparse.height}")
        x0, y0 = cfg.crop.offset(masks.width, masks.height)
        masks = masks.crop(x0, y0, sparse.width, sparse.height)
        if guide is not None:
            guide = guide[y0:y0 + sparse.height, x0:x0 + sparse.width]
        if intr is not None:
            intr = intr.crop(x0, y0, sparse.width, sparse.height)
        post_crop = None
    else:
        post_crop = cfg.crop

    if isinstance(method, ex.Insta):
        out, report = ex.expand_insta(sparse, masks, method.percentile)
    else:
        out = ex.expand(method, sparse, masks=masks, guide=guide, intrinsics=intr)
        report = ex.expansion_report(sparse, out, masks)
    if post_crop is not None:
        before = post_crop.apply(sparse)
        out = post_crop.apply(out)
        report = ex.ExpansionReport(before.density, out.density, report.instances_total,
                                    report.instances_filled)
    return out, report


def _expand_task(task):
    frame, cfg, input_dir, out = task

    def work():
        result, report = expand_frame(frame, cfg, input_dir)
        metrics.write_depth_png(Path(out) / f"{frame.frame_id}.png", result)
        return report.to_dict()
    return _guarded(work, frame.frame_id)


def _depth_path(directory: Path, frame_id: str) -> Path:
    nested = directory / frame_id / "gt_depth.png"
    return nested if nested.exists() else directory / f"{frame_id}.png"


def _frame_ids(directory: Path) -> set[str]:
    ids = {p.stem for p in directory.glob("*.png")}
    ids |= {d.name for d in directory.iterdir() if d.is_dir() and (d / "gt_depth.png").exists()}
    return ids


def _eval_task(task):
    fid, pred_path, gt_path, cap, crop = task

    def work():
        pred = metrics.read_depth_png(pred_path, cap)
        gt = metrics.read_depth_png(gt_path, cap)
        if crop is not None:
            if pred.shape != (crop.height, crop.width):
                pred = crop.apply(pred)
            if gt.shape != (crop.height, crop.width):
                gt = crop.apply(gt)
        return metrics.metric_sums(pred, gt, cap)
    return _guarded(work, fid)


def _write_jsonl(path, rows):
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _report_failures(results) -> int:
    failed = [(fid, err) for fid, _, err in results if err is not None]
    for fid, err in failed:
        log.error("frame %s failed: %s", fid, err)
    return 1 if failed else 0


def cmd_project(args) -> int:
    cfg = build_config(args)
    if not args.root or not args.out:
        raise ConfigError("project needs --root and --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = discover_frames(args.root)
    results = _run_frames(_project_task, [(f, cfg, str(out)) for f in frames], cfg.jobs)
    log.info("projected %d frames", len(frames))
    return _report_failures(results)


def cmd_expand(args) -> int:
    cfg = build_config(args)
    if not args.root or not args.out:
        raise ConfigError("expand needs --root and --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = discover_frames(args.root)
    tasks = [(f, cfg, args.input, str(out)) for f in frames]
    results = _run_frames(_expand_task, tasks, cfg.jobs)
    rows = [{"frame_id": fid, **rep} for fid, rep, err in results if err is None]
    _write_jsonl(out / "expand_report.jsonl", rows)
    return _report_failures(results)


def cmd_eval(args) -> int:
    cfg = build_config(args)
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise ConfigError(f"{d} is not a directory")
    pred_ids, gt_ids = _frame_ids(pred_dir), _frame_ids(gt_dir)
    if pred_ids != gt_ids:
        missing_pred = sorted(gt_ids - pred_ids)
        missing_gt = sorted(pred_ids - gt_ids)
        log.error("frame sets differ; missing predictions: %s; missing ground truth: %s",
                  missing_pred, missing_gt)
        return 1
    ids = sorted(pred_ids)
    tasks = [(fid, _depth_path(pred_dir, fid), _depth_path(gt_dir, fid), cfg.cap, cfg.crop) for fid in ids]
    results = _run_frames(_eval_task, tasks, cfg.jobs)
    rows, sums = [], []
    for fid, s, err in results:
        if err is not None:
            continue
        sums.append(s)
        row = {"frame_id": fid, "evaluated_pixels": s.evaluated, "cap": cfg.cap}
        if s.evaluated:
            row.update(metrics.report_from_sums(s, cfg.cap).to_dict())
        else:
            row.update({"abs_rel": None, "rmse": None, "mae": None, "coverage": 0.0})
        rows.append(row)
    status = _report_failures(results)
    try:
        agg = metrics.aggregate(sums, cfg.cap).to_dict()
    except metrics.EmptyEvaluationError as e:
        log.error("aggregate: %s", e)
        agg = {"abs_rel": None, "rmse": None, "mae": None, "evaluated_pixels": 0, "coverage": 0.0,
               "cap": cfg.cap}
        status = 1
    rows.append({"frame_id": AGGREGATE_ID, "frames": len(sums), **agg})
    _write_jsonl(args.out, rows)
    return status


def render_depth(depth_map: SparseDepthMap, cap: float = 80.0, dilate: int = 0) -> np.ndarray:
    """RGB uint8 image: turbo colormap over [0, cap], invalid pixels black.

    ``dilate`` grows each valid pixel into a disk of that radius; where disks
    meet, the nearer depth is drawn.
    """
    from matplotlib import colormaps
    from scipy import ndimage

    d = np.where(depth_map.valid, depth_map.depth, np.inf)
    if dilate > 0:
        yy, xx = np.mgrid[-dilate:dilate + 1, -dilate:dilate + 1]
        d = ndimage.grey_erosion(d, footprint=(xx * xx + yy * yy) <= dilate * dilate, mode="constant",
                                 cval=np.inf)
    valid = np.isfinite(d)
    lut = (colormaps["turbo"](np.linspace(0.0, 1.0, 256))[:, :3] * 255).round().astype(np.uint8)
    idx = np.zeros(d.shape, dtype=np.int64)
    idx[valid] = np.clip(np.rint(d[valid] / cap * 255), 0, 255).astype(np.int64)
    rgb = lut[idx]
    rgb[~valid] = 0
    return rgb


def cmd_render(args) -> int:
    cap = args.cap if args.cap is not None else DEFAULTS["cap"]
    if args.dilate < 0:
        raise ConfigError("--dilate must be non-negative")
    depth = metrics.read_depth_png(args.input, cap)
    Image.fromarray(render_depth(depth, cap, args.dilate)).save(args.output, format="PNG")
    return 0


def _floats(text, n, name):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"{name} expects {n} comma-separated numbers") from None
    if len(vals) != n:
        raise ConfigError(f"{name} expects {n} comma-separated numbers")
    return vals


def cmd_bev_pool(args) -> int:
    cap = args.cap if args.cap is not None else DEFAULTS["cap"]
    try:
        dmin, dmax, count = _floats(args.dbound, 3, "--dbound")
        bins = bev.DepthBins(dmin, dmax, int(count))
        spec = bev.BevGridSpec(*_floats(args.bev_range, 4, "--bev-range"), args.bev_res)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    calib = load_calibration(args.calib)
    if calib.intrinsics is None:
        raise ConfigError(f"{args.calib} lacks camera intrinsics")
    depth = metrics.read_depth_png(args.depth, cap)
    k = calib.intrinsics
    if (depth.width, depth.height) != (k.width, k.height):
        raise ConfigError(f"depth {depth.width}x{depth.height} does not match calibration {k.width}x{k.height}")
    dist = bev.one_hot_distribution(depth.depth, bins, args.downsample)
    if args.features:
        feats = np.load(args.features)
        if feats.ndim == 2:
            feats = feats[..., None]
    else:
        feats = np.ones(dist.shape[:2] + (1,))
    grid = bev.lift_and_pool(k, args.downsample, bins, feats, dist, calib.sensor_to_ego, spec)
    bev.write_bevg(args.out, grid)
    return 0


def cmd_synth(args) -> int:
    if args.frames < 0:
        raise ConfigError("--frames must be non-negative")
    try:
        spec = synth.SceneSpec(seed=args.seed, object_count=args.objects,
                               depth_range=tuple(_floats(args.depth_range, 2, "--depth-range")),
                               radar_points_per_object=args.points, radar_noise_sigma=args.noise,
                               ego_speed=args.speed, sweep_count=args.sweep_count, width=args.width,
                               height=args.height, focal=args.focal, clutter_per_sweep=args.clutter)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    ids = synth.write_dataset(args.out, spec, args.frames)
    log.info("wrote %d synthetic frames to %s", len(ids), args.out)
    return 0


def _add_common(p):
    p.add_argument("--config", help="flat JSON file mirroring the pipeline options")
    p.add_argument("--root", help="dataset root")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--sweeps", type=int, help="radar sweeps to accumulate (default 5)")
    p.add_argument("--cap", type=float, help="maximum valid depth in meters (default 80)")
    p.add_argument("--method", choices=["raw", "height", "jbf", "insta"], help="expansion method")
    p.add_argument("--dh", type=float, help="height extension in meters (default 1.5)")
    p.add_argument("--radius", type=int, help="JBF window radius in pixels (default 15)")
    p.add_argument("--sigma-s", dest="sigma_s", type=float, help="JBF spatial sigma (default 7)")
    p.add_argument("--sigma-r", dest="sigma_r", type=float, help="JBF range sigma (default 12)")
    p.add_argument("--crop", help="WxH or WxH+X+Y, applied after expansion (default none)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instaradar", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="accumulate and project radar sweeps to depth PNGs")
    _add_common(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("expand", help="densify projected radar depth")
    _add_common(p)
    p.add_argument("--input", help="directory of projected depth PNGs (default: project on the fly)")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("eval", help="AbsRel / RMSE / coverage against ground truth")
    _add_common(p)
    p.add_argument("--pred", required=True, help="directory of predicted depth PNGs")
    p.add_argument("--gt", required=True, help="ground-truth directory (flat PNGs or dataset root)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="colorize a depth PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--cap", type=float)
    p.add_argument("--dilate", type=int, default=0, help="point enlargement radius in pixels")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bev-pool", help="lift a depth map and voxel-pool it to a BEVG grid")
    p.add_argument("--depth", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--features", help=".npy array (H', W', C); default a ones channel")
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=float)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--dbound", default="1,80,118", help="d_min,d_max,count")
    p.add_argument("--bev-range", default="-51.2,51.2,-51.2,51.2", help="x_min,x_max,y_min,y_max")
    p.add_argument("--bev-res", type=float, default=0.8)
    p.set_defaults(func=cmd_bev_pool)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objects", type=int, default=6)
    p.add_argument("--points", type=int, default=8, help="radar points per object")
    p.add_argument("--noise", type=float, default=0.0, help="radar range noise sigma in meters")
    p.add_argument("--speed", type=float, default=8.0, help="ego speed in m/s")
    p.add_argument("--sweep-count", dest="sweep_count", type=int, default=5)
    p.add_argument("--clutter", type=int, default=0, help="background returns per sweep")
    p.add_argument("--depth-range", default="5,60")
    p.add_argument("--width", type=int, default=1600)
    p.add_argument("--height", type=int, default=900)
    p.add_argument("--focal", type=float, default=1266.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    except (OSError, ValueError) as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
