import numpy as np
import pytest

from instaradar.bev import (BevGridSpec, DepthBins, lift, make_frustum, merge_grids, one_hot_distribution,
                            read_bevg, voxel_pool, voxel_pool_sharded, write_bevg)
from instaradar.geom import CameraIntrinsics, Pose, backproject

from conftest import random_pose


def test_bins():
    b = DepthBins()
    assert b.count == 118 and b.edges[0] == 1.0 and b.edges[-1] == 80.0
    assert np.all(np.diff(b.edges) > 0)
    np.testing.assert_array_equal(DepthBins(2, 4, 2).index([2.0, 2.999, 3.0, 3.99, 4.0, 1.0]), [0, 0, 1, 1, -1, -1])
    for bad in [(0, 1, 1), (5, 4, 2), (1, 2, 0)]:
        with pytest.raises(ValueError):
            DepthBins(*bad)


def test_frustum_single_cell():
    k = CameraIntrinsics(100.0, 100.0, 3.5, 3.5, 8, 8)
    f = make_frustum(k, 8, DepthBins(9.0, 11.0, 1))
    assert len(f.points) == 1
    np.testing.assert_array_equal(f.points[0], backproject(k, 3.5, 3.5, 10.0))
    np.testing.assert_allclose(f.points[0], [0, 0, 10.0])


def test_frustum_optical_axis_and_count():
    k = CameraIntrinsics(200.0, 200.0, 16.0, 8.0, 33, 17)
    bins = DepthBins(1, 10, 9)
    f = make_frustum(k, 1, bins)
    assert len(f.points) == 33 * 17 * 9
    axis = (f.grid_u == 16) & (f.grid_v == 8)
    np.testing.assert_array_equal(f.points[axis], np.column_stack([np.zeros(9), np.zeros(9), bins.centers]))
    k2 = CameraIntrinsics(500.0, 500.0, 352.0, 128.0, 704, 256)
    assert len(make_frustum(k2, 16, DepthBins()).points) == (704 // 16) * (256 // 16) * 118
    with pytest.raises(ValueError):
        make_frustum(k2, 3, DepthBins())


def test_lift_one_hot_and_uniform(rng):
    feats = rng.normal(size=(3, 4, 5))
    dist = np.zeros((3, 4, 6))
    dist[..., 2] = 1
    out = lift(feats, dist)
    assert out.shape == (3, 4, 6, 5)
    np.testing.assert_array_equal(out[:, :, 2], feats)
    assert np.all(out[:, :, [0, 1, 3, 4, 5]] == 0)
    np.testing.assert_allclose(lift(feats, np.full((3, 4, 6), 1 / 6))[:, :, 3], feats / 6)
    with pytest.raises(ValueError):
        lift(feats, np.full((3, 5, 6), 1 / 6))
    with pytest.raises(ValueError):
        lift(feats, np.full((3, 4, 6), 0.5))


def test_lift_normalization(rng):
    feats = rng.normal(size=(5, 6, 4))
    logits = rng.normal(size=(5, 6, 10))
    dist = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    np.testing.assert_allclose(lift(feats, dist).sum(axis=2), feats, atol=1e-6)


def test_grid_spec():
    s = BevGridSpec(-2, 2, -1, 1, 0.5)
    assert (s.nx, s.ny) == (8, 4)
    with pytest.raises(ValueError):
        BevGridSpec(0, 1, 0, 1, 0.3)
    ix, iy, inside = s.cell_index(np.array([[-2.0, -1.0], [-1.5, 0.0], [2.0, 0.0], [1.9999, 0.9999]]))
    assert list(ix[inside]) == [0, 1, 7] and list(iy[inside]) == [0, 2, 3]
    assert list(inside) == [True, True, False, True]


def test_pool_single_and_additive():
    spec = BevGridSpec(0, 4, 0, 4, 1.0)
    g = voxel_pool([[1.5, 2.5, 0.0]], [[3.0, -1.0]], Pose(), spec)
    assert g.cells[1, 2].tolist() == [3.0, -1.0]
    assert np.count_nonzero(g.cells) == 2
    g = voxel_pool([[1.2, 2.2, 5.0], [1.8, 2.9, -3.0]], [[1.0], [2.5]], Pose(), spec)
    assert g.cells[1, 2, 0] == 3.5 and g.cells.sum() == 3.5
    g = voxel_pool(np.zeros((0, 3)), np.zeros((0, 2)), Pose(), spec)
    assert g.cells.shape == (4, 4, 2) and not g.cells.any()


def test_pool_mass_conservation(rng):
    spec = BevGridSpec(-50, 50, -50, 50, 0.5)
    for _ in range(20):
        n = int(rng.integers(1, 3000))
        pts = np.column_stack([rng.uniform(-49, 49, n), rng.uniform(-49, 49, n), rng.uniform(-3, 3, n)])
        feats = rng.uniform(0, 1, (n, 3))
        g = voxel_pool(pts, feats, Pose(), spec)
        np.testing.assert_allclose(g.cells.sum(axis=(0, 1)), feats.sum(axis=0), rtol=1e-6)


def test_pool_permutation_and_sharding(rng):
    spec = BevGridSpec(-20, 20, -20, 20, 0.8)
    cam = random_pose(rng, 2)
    pts = rng.uniform(-25, 25, (5000, 3))
    feats = rng.normal(size=(5000, 4))
    ref = voxel_pool(pts, feats, cam, spec)
    perm = rng.permutation(5000)
    np.testing.assert_allclose(voxel_pool(pts[perm], feats[perm], cam, spec).cells, ref.cells, atol=1e-9)
    np.testing.assert_allclose(voxel_pool_sharded(pts, feats, cam, spec, 7).cells, ref.cells, atol=1e-6)
    np.testing.assert_array_equal(voxel_pool(pts, feats, cam, spec).cells, ref.cells)


def test_pool_translation_shifts_columns(rng):
    spec = BevGridSpec(-16, 16, -16, 16, 0.5)
    pts = np.round(rng.uniform(-10, 10, (400, 3)) * 8) / 8
    feats = rng.uniform(0, 1, (400, 2))
    base = voxel_pool(pts, feats, Pose(), spec).cells
    for k in (-3, 1, 4):
        moved = voxel_pool(pts, feats, Pose(translation=[k * 0.5, 0, 0]), spec).cells
        np.testing.assert_array_equal(np.roll(base, k, axis=0), moved)


def test_one_hot_distribution():
    bins = DepthBins(1, 9, 4)
    d = np.zeros((4, 4))
    d[0, 0] = 2.0
    d[0, 1] = 8.0
    dist = one_hot_distribution(d, bins, 2)
    assert dist.shape == (2, 2, 4)
    np.testing.assert_array_equal(dist[0, 0], [0.5, 0, 0, 0.5])
    assert not dist[1].any()


def test_bevg_roundtrip(tmp_path, rng):
    spec = BevGridSpec(-4, 4, -2, 2, 0.5)
    cells = rng.normal(size=(spec.nx, spec.ny, 3)).astype(np.float32).astype(np.float64)
    from instaradar.bev import BevGrid
    write_bevg(tmp_path / "g.bevg", BevGrid(spec, cells))
    raw = (tmp_path / "g.bevg").read_bytes()
    assert raw[:4] == b"BEVG" and len(raw) == 28 + cells.size * 4
    back = read_bevg(tmp_path / "g.bevg")
    np.testing.assert_array_equal(back.cells, cells)
    assert back.spec == spec
    merged = merge_grids([back, back])
    np.testing.assert_array_equal(merged.cells, 2 * cells)
