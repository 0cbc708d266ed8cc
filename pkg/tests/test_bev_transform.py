import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osm_localizer.bev_transform import (
    CameraIntrinsics,
    DegenerateNormalizationError,
    DepthBins,
    DepthDistribution,
    SimplexError,
    collapse_to_polar,
    depth_to_normalized_disparity,
    disparity_loss,
    expected_depth,
    image_to_bev,
    lift_to_polar,
    polar_to_cartesian,
    scatter_to_frustum,
)
from osm_localizer.tensors import FeatureGrid, FrameTag


def _random_simplex(rng, shape):
    p = rng.random(shape)
    return p / p.sum(axis=-1, keepdims=True)


def test_simplex_validation(rng):
    a = DepthDistribution(_random_simplex(rng, (3, 4, 5)))
    assert a.check() is a
    bad = a.probs.copy()
    bad[1, 2, 0] += 1e-3
    with pytest.raises(SimplexError, match=r"\(1, 2\)"):
        DepthDistribution(bad).check()
    neg = a.probs.copy()
    neg[0, 0, 0] = -0.1
    neg[0, 0, 1] += 0.1
    with pytest.raises(SimplexError, match="negative"):
        DepthDistribution(neg).check()


def test_lift_matches_quadruple_loop(rng):
    U, V, D, C = 3, 4, 5, 2
    F = rng.standard_normal((U, V, C))
    alpha = _random_simplex(rng, (U, V, D))
    grid = FeatureGrid(F, FrameTag.IMAGE_PLANE)
    dist = DepthDistribution(alpha)
    frustum = scatter_to_frustum(grid, dist)
    want_f = np.zeros((U, D, V, C))
    want_p = np.zeros((D, V, C))
    want_s = np.zeros((D, V, C))
    for u in range(U):
        for i in range(D):
            for v in range(V):
                for c in range(C):
                    want_f[u, i, v, c] = alpha[u, v, i] * F[u, v, c]
                    want_p[i, v, c] += alpha[u, v, i] * want_f[u, i, v, c]
                    want_s[i, v, c] += want_f[u, i, v, c]
    np.testing.assert_allclose(frustum, want_f, atol=1e-12)
    np.testing.assert_allclose(collapse_to_polar(frustum, dist).data, want_p, atol=1e-12)
    np.testing.assert_allclose(lift_to_polar(grid, dist).data, want_p, atol=1e-12)
    np.testing.assert_allclose(lift_to_polar(grid, dist, single_weighting=True).data, want_s, atol=1e-12)
    assert lift_to_polar(grid, dist).frame_tag == FrameTag.POLAR_BEV


def test_one_hot_places_feature_in_its_bin(rng):
    U, V, D, C = 2, 3, 6, 4
    F = rng.standard_normal((U, V, C))
    idx = rng.integers(0, D, (U, V))
    polar = lift_to_polar(FeatureGrid(F, FrameTag.IMAGE_PLANE), DepthDistribution.one_hot(idx, D)).data
    want = np.zeros((D, V, C))
    for u in range(U):
        for v in range(V):
            want[idx[u, v], v] += F[u, v]
    np.testing.assert_allclose(polar, want, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31))
def test_single_weighting_conserves_mass(U, V, D, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((U, V, 3))
    alpha = _random_simplex(rng, (U, V, D))
    polar = lift_to_polar(FeatureGrid(F, FrameTag.IMAGE_PLANE), DepthDistribution(alpha), single_weighting=True)
    np.testing.assert_allclose(polar.data.sum(axis=0), F.sum(axis=0), atol=1e-9)


def test_lift_shape_and_tag_errors(rng):
    F = FeatureGrid(rng.standard_normal((3, 4, 2)), FrameTag.IMAGE_PLANE)
    with pytest.raises(ValueError):
        lift_to_polar(F, DepthDistribution(_random_simplex(rng, (3, 5, 4))))
    with pytest.raises(Exception):
        lift_to_polar(FeatureGrid(F.data, FrameTag.MAP_PLANE), DepthDistribution(_random_simplex(rng, (3, 4, 4))))


def test_polar_to_cartesian_geometry():
    # a polar grid that encodes (range bin, column) in its channels
    cam = CameraIntrinsics(fx=8.0, cx=8.0, cols=17, rows=1)
    bins = DepthBins(0.0, 1.0, 10)
    i, v = np.meshgrid(np.arange(10.0), np.arange(17.0), indexing="ij")
    polar = FeatureGrid(np.stack([i, v, np.ones_like(i)], axis=-1), FrameTag.POLAR_BEV)
    bev = polar_to_cartesian(polar, cam, bins, L=9, gsd=1.0)
    assert bev.frame_tag == FrameTag.CARTESIAN_BEV and bev.data.shape == (10, 9, 3)
    # optical axis: Cartesian row r equals polar bin r, image column cx
    np.testing.assert_allclose(bev.data[:, 4, 0], np.arange(10.0))
    np.testing.assert_allclose(bev.data[:, 4, 1], 8.0)
    # forward 4 m, 3 m to the right: range 5 m -> bin 4, column cx + fx * 3 / 4 = 14
    np.testing.assert_allclose(bev.data[3, 7], [4.0, 14.0, 1.0], atol=1e-12)
    # cells beyond the frustum are empty: forward 1 m, lateral 4 m -> column 40
    assert not bev.data[0, 8].any()


def test_polar_to_cartesian_rejects_even_width_and_shape():
    cam = CameraIntrinsics(4.0, 4.0, 8, 2)
    bins = DepthBins(D=4)
    polar = FeatureGrid(np.zeros((4, 8, 1)), FrameTag.POLAR_BEV)
    with pytest.raises(ValueError):
        polar_to_cartesian(polar, cam, bins, L=8)
    with pytest.raises(ValueError):
        polar_to_cartesian(FeatureGrid(np.zeros((5, 8, 1)), FrameTag.POLAR_BEV), cam, bins, L=9)


def test_image_to_bev_composes(rng):
    cam = CameraIntrinsics(4.0, 4.0, 8, 3)
    bins = DepthBins(0.0, 0.5, 6)
    F = FeatureGrid(rng.standard_normal((3, 8, 2)), FrameTag.IMAGE_PLANE)
    a = DepthDistribution(_random_simplex(rng, (3, 8, 6)))
    np.testing.assert_array_equal(
        image_to_bev(F, a, cam, bins, L=5).data, polar_to_cartesian(lift_to_polar(F, a), cam, bins, L=5).data
    )


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 4, 4)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 4.0, 4, 4)
    with pytest.raises(ValueError):
        DepthBins(delta=0.0)


def test_expected_depth(rng):
    bins = DepthBins(1.0, 0.5, 4)
    np.testing.assert_allclose(bins.centers, [1.5, 2.0, 2.5, 3.0])
    a = DepthDistribution.one_hot(np.array([[0, 3]]), 4)
    np.testing.assert_allclose(expected_depth(a, bins), [[1.5, 3.0]])
    with pytest.raises(ValueError):
        expected_depth(a, DepthBins(D=5))


def test_disparity_normalization():
    d = np.array([[1.0, 2.0], [4.0, 4.0]])
    # inverse depths 1, 0.5, 0.25 -> (t - 0.25) / 0.75
    np.testing.assert_allclose(depth_to_normalized_disparity(d), [[1.0, 1 / 3], [0.0, 0.0]])
    with pytest.raises(DegenerateNormalizationError):
        depth_to_normalized_disparity(np.full((2, 2), 3.0))
    with pytest.raises(ValueError):
        depth_to_normalized_disparity(np.array([1.0, 0.0]))


def test_disparity_loss():
    a = np.array([0.0, 0.5, 1.0, 0.25])
    assert disparity_loss(a, a) == 0.0
    assert disparity_loss(a, np.array([0.1, 0.5, 0.8, 0.25])) == pytest.approx(0.075)
    with pytest.raises(ValueError):
        disparity_loss(a, a[:3])
