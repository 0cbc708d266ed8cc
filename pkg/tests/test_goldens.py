import pytest

from osm_localizer.osm_ingest import LocalFrame, VectorCanvas, build_geometry, parse_osm_xml
from osm_localizer.rasterizer import write_osmr, load_raster, rasterize

from .conftest import DATA
from .make_goldens import CASES, golden_path, render_case
from .oracles import fill_band


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden_bytes(name, taxonomy):
    raster = render_case(name, taxonomy)
    assert write_osmr(raster) == golden_path(name).read_bytes()
    load_raster(golden_path(name)).validate(taxonomy)


@pytest.mark.parametrize("name", sorted(CASES))
def test_polygon_fill_bands(name, taxonomy):
    origin, bounds, gsd = CASES[name]
    doc = parse_osm_xml((DATA / name).read_bytes())
    canvas = build_geometry(doc, LocalFrame.at(origin), taxonomy)
    xmin, ymin, xmax, ymax = bounds
    # the band holds for polygons that lie wholly on the raster
    inside = [
        (rings, cls)
        for rings, cls in canvas.polygons
        if rings[0][:, 0].min() >= xmin and rings[0][:, 1].min() >= ymin
        and rings[0][:, 0].max() <= xmax and rings[0][:, 1].max() <= ymax
    ]
    assert len(inside) >= 0.75 * len(canvas.polygons)
    for rings, cls in inside:
        alone = rasterize(VectorCanvas(((rings, cls),), (), ()), bounds, gsd)
        lo, hi = fill_band(rings, gsd)
        assert lo <= int((alone.planes[0] == cls.class_id).sum()) <= hi
