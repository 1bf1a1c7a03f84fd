import numpy as np
import pytest

from instaradar.depthmap import SparseDepthMap
from instaradar.expand import (HeightExtend, Insta, Jbf, Raw, dominant_depths, expand, expand_height,
                               expand_insta, expand_jbf, height_extension_rows, nearest_fill)
from instaradar.geom import CameraIntrinsics
from instaradar.masks import InstanceMaskSet

from oracles import height_column_oracle, insta_oracle, jbf_oracle


def rect_scene(rng, h=48, w=64, n_rect=5, n_pts=40):
    labels = np.zeros((h, w), int)
    for i in range(1, n_rect + 1):
        v0, u0 = rng.integers(0, h - 4), rng.integers(0, w - 4)
        labels[v0:v0 + rng.integers(2, 15), u0:u0 + rng.integers(2, 15)] = i
    depth = np.zeros((h, w))
    vs, us = rng.integers(0, h, n_pts), rng.integers(0, w, n_pts)
    depth[vs, us] = np.round(rng.uniform(1, 80, n_pts), 3)
    return SparseDepthMap(depth), InstanceMaskSet(labels)


def test_insta_dominant_min_with_overlay():
    lab = np.zeros((4, 6), int)
    lab[1:3, 1:5] = 1
    d = np.zeros((4, 6))
    d[1, 1], d[2, 4] = 10.0, 42.5
    out, rep = expand_insta(SparseDepthMap(d), InstanceMaskSet(lab))
    expected = np.where(lab == 1, 10.0, 0.0)
    expected[2, 4] = 42.5
    np.testing.assert_array_equal(out.depth, expected)
    assert (rep.instances_total, rep.instances_filled) == (1, 1)
    assert rep.input_density == 2 / 24 and rep.output_density == 8 / 24


def test_insta_empty_instance_untouched():
    lab = np.zeros((4, 4), int)
    lab[0:2, 0:2] = 1
    lab[2:4, 2:4] = 2
    d = np.zeros((4, 4))
    d[0, 0] = 5.0
    out, rep = expand_insta(SparseDepthMap(d), InstanceMaskSet(lab))
    assert np.all(out.depth[lab == 2] == 0)
    assert rep.instances_filled == 1 and rep.instances_total == 2


def test_insta_matches_brute_force(rng):
    for _ in range(30):
        sparse, masks = rect_scene(rng)
        out, rep = expand_insta(sparse, masks)
        np.testing.assert_array_equal(out.depth, insta_oracle(sparse.depth, masks.labels))
        assert out.cap == sparse.cap
        assert 0 <= rep.input_density <= rep.output_density <= 1
        assert rep.instances_filled <= rep.instances_total


def test_insta_invariants(rng):
    for _ in range(30):
        sparse, masks = rect_scene(rng)
        out, _ = expand_insta(sparse, masks)
        # overlay
        assert np.array_equal(out.depth[sparse.valid], sparse.depth[sparse.valid])
        # provenance and range preservation
        dom = dominant_depths(sparse, masks)
        new = out.valid & ~sparse.valid
        for v, u in zip(*np.nonzero(new)):
            assert out.depth[v, u] == dom[int(masks.labels[v, u])]
        assert set(np.unique(out.depth[out.valid])) <= set(np.unique(sparse.depth[sparse.valid]))
        assert out.valid_count >= sparse.valid_count


def test_insta_percentile_variant():
    lab = np.ones((1, 5), int)
    d = np.array([[4.0, 0, 8.0, 0, 6.0]])
    assert dominant_depths(SparseDepthMap(d), InstanceMaskSet(lab), 0) == {1: 4.0}
    assert dominant_depths(SparseDepthMap(d), InstanceMaskSet(lab), 50) == {1: 6.0}
    assert dominant_depths(SparseDepthMap(d), InstanceMaskSet(lab), 100) == {1: 8.0}


def test_insta_dimension_mismatch():
    with pytest.raises(ValueError):
        expand_insta(SparseDepthMap(np.zeros((3, 3))), InstanceMaskSet(np.zeros((3, 4))))


@pytest.fixture
def small_cam():
    return CameraIntrinsics(400.0, 400.0, 32.0, 40.0, 64, 80)


def test_height_column_at_bottom(small_cam):
    # fy * dh / d = 40 rows
    d = np.zeros((80, 64))
    d[79, 10] = 10.0
    out = expand_height(SparseDepthMap(d), small_cam, dh=1.0)
    col = np.nonzero(out.depth[:, 10])[0]
    assert list(col) == list(range(39, 80))
    assert len(col) == 41 and np.all(out.depth[col, 10] == 10.0)
    assert out.valid_count == 41
    assert set(col) == height_column_oracle(small_cam, 10, 79, 10.0, 1.0)


def test_height_degenerate(small_cam, rng):
    d = np.zeros((80, 64))
    d[rng.integers(0, 80, 20), rng.integers(0, 64, 20)] = rng.uniform(5, 60, 20)
    sparse = SparseDepthMap(d)
    assert expand_height(sparse, small_cam, dh=1e-4) == sparse


def test_height_min_rule_and_overlay(small_cam):
    d = np.zeros((80, 64))
    d[70, 5] = 5.0
    d[60, 5] = 20.0
    out = expand_height(SparseDepthMap(d), small_cam, dh=1.0)
    # 5 m point covers rows 0..70 (80 rows up, clipped); 20 m point covers rows 40..60
    assert out.depth[60, 5] == 20.0          # original pixel keeps its own depth
    assert np.all(out.depth[40:60, 5] == 5.0)  # overlap resolves to the nearer depth
    assert np.all(out.depth[0:40, 5] == 5.0)


def test_height_matches_projective_oracle(small_cam, rng):
    for _ in range(15):
        u, v = int(rng.integers(0, 64)), int(rng.integers(0, 80))
        depth, dh = float(rng.uniform(2, 80)), float(rng.uniform(0.1, 3))
        rows = height_column_oracle(small_cam, u, v, depth, dh, samples=4001)
        top = height_extension_rows(v, depth, small_cam.fy, dh)
        assert set(range(int(top), v + 1)) == rows


def test_jbf_single_sample_constant_guide():
    d = np.zeros((20, 20))
    d[10, 10] = 17.25
    out = expand_jbf(SparseDepthMap(d), np.full((20, 20), 50.0), radius=3, sigma_s=2, sigma_r=10)
    win = np.zeros((20, 20), bool)
    win[7:14, 7:14] = True
    assert np.all(out.depth[win] == 17.25)
    assert np.all(out.depth[~win] == 0)


def test_jbf_constant_field(rng):
    d = np.full((12, 12), 33.0)
    out = expand_jbf(SparseDepthMap(d), rng.uniform(0, 255, (12, 12)), radius=2, sigma_s=1.5, sigma_r=20)
    np.testing.assert_allclose(out.depth, 33.0, rtol=0, atol=1e-12)


def test_jbf_matches_double_loop(rng):
    for radius, ss, sr in [(1, 1.0, 5.0), (3, 2.0, 12.0), (15, 7.0, 12.0)]:
        d = np.where(rng.random((16, 16)) < 0.15, rng.uniform(1, 80, (16, 16)), 0.0)
        g = rng.uniform(0, 255, (16, 16))
        out = expand_jbf(SparseDepthMap(d), g, radius, ss, sr)
        np.testing.assert_allclose(out.depth, jbf_oracle(d, g, radius, ss, sr), rtol=0, atol=1e-9)


def test_jbf_mismatch():
    with pytest.raises(ValueError):
        expand_jbf(SparseDepthMap(np.zeros((4, 4))), np.zeros((4, 5)))


def test_method_validation():
    with pytest.raises(ValueError):
        HeightExtend(0)
    with pytest.raises(ValueError):
        Jbf(radius=0)
    with pytest.raises(ValueError):
        Jbf(sigma_r=0)


def test_dispatch(rng, small_cam):
    sparse, masks = rect_scene(rng, h=80, w=64)
    assert expand(Raw(), sparse) is sparse
    empty = InstanceMaskSet(np.zeros((80, 64)))
    assert expand(Insta(), sparse, masks=empty) == sparse
    guide = rng.uniform(0, 255, (80, 64))
    for method, kw in [(Insta(), {"masks": masks}), (HeightExtend(), {"intrinsics": small_cam}),
                       (Jbf(radius=3, sigma_s=2), {"guide": guide}), (Raw(), {})]:
        assert expand(method, sparse, **kw).density >= sparse.density
    for method in (Insta(), HeightExtend(), Jbf()):
        with pytest.raises(ValueError):
            expand(method, sparse)


def test_nearest_fill():
    d = np.zeros((3, 5))
    d[1, 0], d[1, 4] = 2.0, 9.0
    out = nearest_fill(SparseDepthMap(d))
    np.testing.assert_array_equal(out.depth[:, :2], 2.0)
    np.testing.assert_array_equal(out.depth[:, 3:], 9.0)
