import numpy as np
import pytest

from instaradar.expand import expand_insta
from instaradar.geom import project
from instaradar.radar import accumulate, rasterize
from instaradar.synth import SceneSpec, generate, write_scene


def small(**kw):
    base = dict(width=320, height=180, focal=250.0)
    base.update(kw)
    return SceneSpec(**base)


def accumulated(scene, n=None):
    return accumulate(scene.sweeps, scene.camera.ego_to_global, scene.camera.sensor_to_ego,
                      n or len(scene.sweeps))


def test_zero_objects():
    sc = generate(small(object_count=0))
    assert sc.masks.instance_ids == [] and sc.gt.valid_count == 0
    assert all(len(s) == 0 for s in sc.sweeps)


def test_single_object_static_ego():
    sc = generate(small(object_count=1, depth_range=(20.0, 20.0), ego_speed=0.0, radar_points_per_object=12))
    pts = accumulated(sc)
    assert len(pts) == 12
    for p in pts:
        px = project(sc.intrinsics, p)
        assert px is not None and px.depth == 20.0
        assert sc.masks.labels[px.v, px.u] == 1


def test_determinism():
    a, b = generate(small(seed=9, radar_noise_sigma=0.3)), generate(small(seed=9, radar_noise_sigma=0.3))
    assert a.masks == b.masks and a.gt == b.gt
    np.testing.assert_array_equal(a.guide, b.guide)
    for sa, sb in zip(a.sweeps, b.sweeps):
        assert sa.points == sb.points and sa.ego_to_global == sb.ego_to_global


def test_gt_consistency():
    sc = generate(small(seed=3, object_count=8))
    depths = {o.instance_id: o.depth for o in sc.objects}
    for inst in sc.masks.instance_ids:
        assert np.all(sc.gt.depth[sc.masks.labels == inst] == depths[inst])
    assert np.array_equal(sc.gt.valid, sc.masks.labels > 0)


def test_chain_exact_with_ego_motion():
    for seed in range(5):
        sc = generate(small(seed=seed, ego_speed=13.7))
        assert rasterize(accumulated(sc), sc.intrinsics) == sc.expected_sparse()


def test_zero_noise_insta_equals_gt():
    for seed in range(10):
        sc = generate(small(seed=seed))
        out, rep = expand_insta(rasterize(accumulated(sc), sc.intrinsics), sc.masks)
        hit = np.isin(sc.masks.labels, [i for i in sc.masks.instance_ids
                                        if np.any(out.valid[sc.masks.labels == i])])
        assert np.array_equal(out.depth[hit], sc.gt.depth[hit])
        assert rep.instances_filled == len(sc.masks.instance_ids)


def test_clutter_stays_on_background():
    sc = generate(small(seed=2, clutter_per_sweep=15))
    sparse = rasterize(accumulated(sc), sc.intrinsics)
    off = sparse.valid & (sc.masks.labels == 0)
    assert off.any()


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(depth_range=(0.0, 10.0))
    with pytest.raises(ValueError):
        SceneSpec(depth_range=(10.0, 90.0))
    with pytest.raises(ValueError):
        SceneSpec(object_count=-1)


def test_write_scene_layout(tmp_path):
    write_scene(tmp_path / "f", generate(small(sweep_count=3)))
    names = sorted(p.relative_to(tmp_path / "f").as_posix() for p in (tmp_path / "f").rglob("*") if p.is_file())
    assert names == ["calib.json", "camera.png", "gt_depth.png", "masks.png",
                     "radar/sweep_00.csv", "radar/sweep_00.json", "radar/sweep_01.csv",
                     "radar/sweep_01.json", "radar/sweep_02.csv", "radar/sweep_02.json"]
