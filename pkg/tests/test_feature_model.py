import numpy as np
import pytest

from osm_localizer.bev_transform import CameraIntrinsics, DepthBins, image_to_bev
from osm_localizer.feature_model import (
    ChannelAdapter,
    build_embedding_table,
    embed_map,
    synth_bev_template,
    synth_image_features,
)
from osm_localizer.poses import LocalPoint, Pose
from osm_localizer.rasterizer import CoverageError, MapTile, RasterMap, crop_tile, rasterize
from osm_localizer.taxonomy import Group
from osm_localizer.tensors import FeatureGrid, FrameTag, FrameTagError

from .conftest import load_canvas


def test_table_properties(taxonomy):
    t = build_embedding_table(taxonomy, 16, 0)
    for g in Group:
        tab = t.group(g)
        assert tab.shape == (taxonomy.size(g), 16)
        assert not tab[0].any()
        np.testing.assert_allclose(np.linalg.norm(tab[1:], axis=1), 1.0, atol=1e-12)
    allv = np.vstack([t.group(g)[1:] for g in Group])
    cos = allv @ allv.T
    np.fill_diagonal(cos, -1)
    assert cos.max() < 0.99
    t2 = build_embedding_table(taxonomy, 16, 0)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(t.tables, t2.tables))


def test_table_unseparable_dimension_fails(taxonomy):
    # one channel only offers two unit vectors
    with pytest.raises(RuntimeError):
        build_embedding_table(taxonomy, 1, 0, max_tries=5)


def _tile(rng, taxonomy, h=12, w=14):
    planes = np.stack([rng.integers(0, taxonomy.size(g), (h, w)) for g in Group]).astype(np.uint8)
    return MapTile(RasterMap(planes, 0.5, LocalPoint(-3.0, -3.0)), LocalPoint(0.0, 0.0))


def test_embed_matches_loop(rng, taxonomy):
    table = build_embedding_table(taxonomy, 4, 1)
    tile = _tile(rng, taxonomy)
    grid = embed_map(tile, table)
    assert grid.frame_tag == FrameTag.MAP_PLANE and grid.channels == 12
    for i in range(tile.raster.height):
        for j in range(tile.raster.width):
            want = np.concatenate([table.group(g)[tile.raster.planes[g, i, j]] for g in Group])
            assert np.array_equal(grid.data[i, j], want)


def test_embed_void_and_single_building(taxonomy):
    table = build_embedding_table(taxonomy, 16, 0)
    planes = np.zeros((3, 5, 5), np.uint8)
    tile = MapTile(RasterMap(planes, 0.5, LocalPoint(0, 0)), LocalPoint(1, 1))
    assert not embed_map(tile, table).data.any()
    planes = planes.copy()
    planes[0, 2, 2] = taxonomy.by_name("building").class_id
    grid = embed_map(MapTile(RasterMap(planes, 0.5, LocalPoint(0, 0)), LocalPoint(1, 1)), table)
    assert np.count_nonzero(grid.data[2, 2]) == 16
    assert np.count_nonzero(grid.data) == 16


def test_embed_invalid_id(taxonomy):
    table = build_embedding_table(taxonomy, 4, 0)
    planes = np.zeros((3, 3, 3), np.uint8)
    planes[2, 1, 0] = 99
    with pytest.raises(ValueError, match=r"pixel \(1, 0\) plane 2"):
        embed_map(MapTile(RasterMap(planes, 0.5, LocalPoint(0, 0)), LocalPoint(0, 0)), table)


def test_embed_commutes_with_crop(taxonomy, fixture_frame):
    _, canvas = load_canvas("tiny.osm", taxonomy, fixture_frame)
    r = rasterize(canvas, (-40, -40, 40, 40), 0.5)
    table = build_embedding_table(taxonomy, 8, 3)
    whole = embed_map(MapTile(r, LocalPoint(0, 0)), table).data
    t = crop_tile(r, LocalPoint(5.0, -3.0), 20.0)
    j0 = int(round((t.raster.origin.x - r.origin.x) / 0.5))
    i0 = int(round((t.raster.origin.y - r.origin.y) / 0.5))
    assert np.array_equal(embed_map(t, table).data, whole[i0 : i0 + 40, j0 : j0 + 40])


def test_channel_adapter():
    a = ChannelAdapter.build(5, 5)
    x = np.arange(10.0).reshape(2, 5)
    assert np.array_equal(a(x), x)
    b = ChannelAdapter.build(3, 7, seed=4)
    assert b.matrix.shape == (3, 7)
    assert np.array_equal(b.matrix, ChannelAdapter.build(3, 7, seed=4).matrix)
    with pytest.raises(ValueError):
        b(np.zeros((2, 4)))


def _neighborhood_tile(taxonomy, fixture_frame, size=64.0):
    _, canvas = load_canvas("tiny.osm", taxonomy, fixture_frame)
    r = rasterize(canvas, (-40, -40, 40, 40), 0.5)
    return crop_tile(r, LocalPoint(0.0, 0.0), size)


def test_synth_features_lift_to_ray_samples(taxonomy, fixture_frame):
    tile = _neighborhood_tile(taxonomy, fixture_frame)
    table = build_embedding_table(taxonomy, 16, 0)
    cam = CameraIntrinsics(16.0, 16.0, 32, 40)
    bins = DepthBins(0.0, 0.5, 32)
    pose = Pose(0.0, 0.0, np.pi / 2)
    F, alpha = synth_image_features(tile, table, pose, cam, bins)
    assert F.frame_tag == FrameTag.IMAGE_PLANE and F.data.shape == (40, 32, 48)
    alpha.check()
    assert not F.data[: 40 - 32].any()
    bev = image_to_bev(F, alpha, cam, bins, L=33, gsd=0.5)
    tmpl = synth_bev_template(embed_map(tile, table), tile, pose, bins, L=33, gsd=0.5)
    # along the optical axis the polar and Cartesian grids coincide
    np.testing.assert_allclose(bev.data[:, 16], tmpl.data[:, 16], atol=1e-9)
    F2, alpha2 = synth_image_features(tile, table, pose, cam, bins)
    assert np.array_equal(F.data, F2.data) and np.array_equal(alpha.probs, alpha2.probs)


def test_synth_void_tile_and_coverage(taxonomy):
    table = build_embedding_table(taxonomy, 16, 0)
    tile = MapTile(RasterMap(np.zeros((3, 20, 20), np.uint8), 0.5, LocalPoint(0, 0)), LocalPoint(5, 5))
    cam = CameraIntrinsics(8.0, 8.0, 16, 16)
    bins = DepthBins(0.0, 0.5, 8)
    F, _ = synth_image_features(tile, table, Pose(5, 5, 0), cam, bins)
    assert not F.data.any()
    with pytest.raises(CoverageError):
        synth_image_features(tile, table, Pose(50, 5, 0), cam, bins)
    with pytest.raises(ValueError):
        synth_image_features(tile, table, Pose(5, 5, 0), CameraIntrinsics(8.0, 8.0, 16, 4), bins)


def test_template_rejects_wrong_tag(taxonomy, fixture_frame):
    tile = _neighborhood_tile(taxonomy, fixture_frame, 20.0)
    with pytest.raises(FrameTagError):
        synth_bev_template(FeatureGrid(np.zeros((40, 40, 3)), FrameTag.POLAR_BEV), tile, Pose(0, 0, 0), DepthBins(D=4))
