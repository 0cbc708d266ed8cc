import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osm_localizer.osm_ingest import VectorCanvas
from osm_localizer.poses import LocalPoint, Pose
from osm_localizer.rasterizer import (
    CoverageError,
    MapTile,
    RasterFormatError,
    RasterMap,
    crop_tile,
    rasterize,
    read_osmr,
    sample_prior,
    write_osmr,
)
from osm_localizer.taxonomy import Group

from .conftest import load_canvas
from .oracles import fill_band


def _square(x0, y0, w, h):
    return np.array([(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h), (x0, y0)], dtype=float)


def test_building_block(taxonomy):
    b = taxonomy.by_name("building")
    canvas = VectorCanvas((( (_square(0, 0, 10, 10),), b),), (), ())
    r = rasterize(canvas, (-5, -5, 15, 15), 0.5)
    filled = r.planes[0] == b.class_id
    n = int(filled.sum())
    assert abs(n - 400) <= 40 / 0.5
    # axis-aligned edges on pixel borders give the exact 20 x 20 block
    assert n == 400
    rows, cols = np.nonzero(filled)
    assert rows.max() - rows.min() + 1 == 20 and cols.max() - cols.min() + 1 == 20


def test_empty_canvas_is_void():
    r = rasterize(VectorCanvas.empty(), (0, 0, 10, 10), 0.5)
    assert r.planes.shape == (3, 20, 20) and not r.planes.any()


def test_priority_overwrite(taxonomy):
    grass, building = taxonomy.by_name("grass"), taxonomy.by_name("building")
    assert grass.draw_priority < building.draw_priority
    a = (( _square(0, 0, 10, 10),), building)
    b = (( _square(5, 5, 10, 10),), grass)
    for order in ((a, b), (b, a)):
        r = rasterize(VectorCanvas(order, (), ()), (0, 0, 20, 20), 0.5)
        i, j = 15, 15  # (7.75, 7.75) m lies in both squares
        assert r.planes[0, i, j] == building.class_id
        assert r.planes[0, 25, 25] == grass.class_id  # (12.75, 12.75) m, grass only


def test_planes_by_group(taxonomy, fixture_frame):
    _, canvas = load_canvas("tiny.osm", taxonomy, fixture_frame)
    r = rasterize(canvas, (-40, -40, 40, 40), 0.5)
    r.validate(taxonomy)
    assert set(np.unique(r.planes[0])) == {0, taxonomy.by_name("building").class_id}
    assert set(np.unique(r.planes[1])) == {0, taxonomy.by_name("major_road").class_id}
    assert int((r.planes[2] > 0).sum()) == 1


def test_road_stroke_width(taxonomy):
    road = taxonomy.by_name("major_road")
    canvas = VectorCanvas((), ((np.array([(-20.0, 0.1), (20.0, 0.1)]), road),), ())
    r = rasterize(canvas, (-10, -10, 10, 10), 0.5)
    column = r.planes[1][:, 20]
    assert int((column == road.class_id).sum()) == pytest.approx(6 / 0.5, abs=1)


@settings(max_examples=60, deadline=None)
@given(
    cx=st.floats(-10, 10),
    cy=st.floats(-10, 10),
    rx=st.floats(2, 12),
    ry=st.floats(2, 12),
    n=st.integers(3, 9),
    rot=st.floats(0, 2 * np.pi),
)
def test_fill_count_band(cx, cy, rx, ry, n, rot):
    from osm_localizer.taxonomy import SemanticClass

    cls = SemanticClass(Group.AREA, 1, "a", 0, 0.0)
    t = rot + 2 * np.pi * np.arange(n) / n
    ring = np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)
    ring = np.vstack([ring, ring[:1]])
    gsd = 0.5
    r = rasterize(VectorCanvas((((ring,), cls),), (), ()), (-30, -30, 30, 30), gsd)
    count = int((r.planes[0] == 1).sum())
    lo, hi = fill_band((ring,), gsd)
    assert lo <= count <= hi


def test_multipolygon_hole_raster(taxonomy, fixture_frame):
    _, canvas = load_canvas("multipolygon.osm", taxonomy, fixture_frame)
    r = rasterize(canvas, (-30, -30, 30, 30), 0.5)
    rings, _ = canvas.polygons[0]
    lo, hi = fill_band(rings, 0.5)
    assert lo <= int((r.planes[0] > 0).sum()) <= hi
    assert r.planes[0, 60, 60] == 0  # hole centre
    assert r.planes[0, 60, 90] > 0  # (15 m, 0 m) between the rings


@settings(max_examples=25, deadline=None)
@given(k=st.integers(-6, 6), m=st.integers(-6, 6))
def test_translation_equivariance(taxonomy, fixture_frame, k, m):
    _, canvas = load_canvas("tiny.osm", taxonomy, fixture_frame)
    gsd = 0.5
    a = rasterize(canvas, (-40, -40, 40, 40), gsd)
    b = rasterize(canvas.translated(k * gsd, m * gsd), (-40, -40, 40, 40), gsd)
    sl = slice(10, 150)
    assert np.array_equal(b.planes[:, sl, sl], a.planes[:, 10 - m : 150 - m, 10 - k : 150 - k])


def _raster(rng, h=40, w=50):
    return RasterMap(rng.integers(0, 5, (3, h, w)).astype(np.uint8), 0.5, LocalPoint(3.25, -7.75))


def test_crop_identity_and_shift(rng):
    r = _raster(rng)
    center = LocalPoint(r.origin.x + (r.width - 1) * 0.25, r.origin.y + (r.height - 1) * 0.25)
    t = crop_tile(r, center, 20.0)
    assert t.raster.planes.shape == (3, 40, 40)
    full = crop_tile(RasterMap(r.planes[:, :, :40].copy(), 0.5, r.origin), LocalPoint(r.origin.x + 9.75, r.origin.y + 9.75), 20.0)
    assert full.raster == RasterMap(r.planes[:, :, :40].copy(), 0.5, r.origin)
    t2 = crop_tile(r, LocalPoint(center.x + 1.0, center.y), 20.0)
    assert t2.raster.origin.x == t.raster.origin.x + 1.0
    assert np.array_equal(t2.raster.planes[:, :, :-2], t.raster.planes[:, :, 2:])
    assert t.height_m == 20.0 and t.width_m == 20.0


def test_crop_padding_matches_lookup(rng):
    r = _raster(rng)
    t = crop_tile(r, LocalPoint(r.origin.x + 1.0, r.origin.y + 18.0), 16.0)
    tr = t.raster
    for i in range(tr.height):
        for j in range(tr.width):
            x, y = tr.pixel_center(i, j)
            si = int(round((y - r.origin.y) / r.gsd))
            sj = int(round((x - r.origin.x) / r.gsd))
            want = r.planes[:, si, sj] if 0 <= si < r.height and 0 <= sj < r.width else np.zeros(3)
            assert np.array_equal(tr.planes[:, i, j], want)
    assert crop_tile(r, t.center, 16.0).raster == tr


def test_crop_outside(rng):
    with pytest.raises(CoverageError):
        crop_tile(_raster(rng), LocalPoint(500.0, 500.0), 10.0)


def test_sample_prior():
    gt = Pose(3.0, -2.0, 0.3)
    assert sample_prior(gt, 0.0, 1) == LocalPoint(3.0, -2.0)
    assert sample_prior(gt, 32.0, 9) == sample_prior(gt, 32.0, 9)
    d = [np.hypot(p.x - 3.0, p.y + 2.0) for p in (sample_prior(gt, 32.0, s) for s in range(10000))]
    assert max(d) <= 32.0
    assert np.mean(d) == pytest.approx(2 / 3 * 32, rel=0.02)


def test_osmr_round_trip(rng):
    r = _raster(rng)
    blob = write_osmr(r)
    assert blob[:4] == b"OSMR"
    assert read_osmr(blob) == r
    with pytest.raises(RasterFormatError):
        read_osmr(blob[:-1])
    with pytest.raises(RasterFormatError):
        read_osmr(b"XXXX" + blob[4:])


def test_validate_rejects_bad_ids(taxonomy, rng):
    r = _raster(rng)
    bad = r.planes.copy()
    bad[1, 2, 3] = 200
    with pytest.raises(ValueError, match="plane 1"):
        RasterMap(bad, 0.5, r.origin).validate(taxonomy)


def test_tile_contains():
    t = MapTile(RasterMap(np.zeros((3, 4, 4), np.uint8), 0.5, LocalPoint(0.0, 0.0)), LocalPoint(0.75, 0.75))
    assert t.contains(-0.25, -0.25) and t.contains(1.7, 1.7)
    assert not t.contains(1.75, 0.0)
