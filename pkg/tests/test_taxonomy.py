import pytest

from osm_localizer.taxonomy import Group, TaxonomyError, classify_element, load_taxonomy, parse_taxonomy


def test_default_groups_and_ids(taxonomy):
    names = {g: [c.name for c in taxonomy.classes(g)] for g in Group}
    assert names[Group.AREA] == ["building", "parking", "grass", "forest", "water", "playground"]
    assert names[Group.WAY] == ["major_road", "minor_road", "path", "cycleway", "rail"]
    assert names[Group.NODE] == ["tree", "street_lamp", "crossing", "traffic_signal", "bus_stop", "poi_other"]
    for g in Group:
        ids = [c.class_id for c in taxonomy.classes(g)]
        assert ids == list(range(1, len(ids) + 1))
        assert taxonomy.size(g) <= 8


def test_classify_examples(taxonomy):
    b = classify_element({"building": "yes"}, taxonomy)
    assert (b.group, b.name) == (Group.AREA, "building")
    assert classify_element({}, taxonomy) is None
    road = classify_element({"highway": "primary"}, taxonomy)
    assert (road.group, road.name, road.way_width_m) == (Group.WAY, "major_road", 6.0)
    assert classify_element({"highway": "footway"}, taxonomy).way_width_m == 1.0
    tree = classify_element({"natural": "tree"}, taxonomy)
    assert (tree.group, tree.name) == (Group.NODE, "tree")


def test_first_match_wins_and_group_filter(taxonomy):
    tags = {"building": "yes", "amenity": "parking"}
    assert classify_element(tags, taxonomy).name == "building"
    assert classify_element({"amenity": "cafe"}, taxonomy, (Group.AREA, Group.WAY)) is None
    assert classify_element({"amenity": "cafe"}, taxonomy, (Group.NODE,)).name == "poi_other"


def test_deterministic(taxonomy):
    tags = {"highway": "residential", "name": "x"}
    assert all(classify_element(dict(tags), taxonomy) == classify_element(tags, taxonomy) for _ in range(5))


def test_custom_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("version = 3\narea.lawn = landuse=grass ; priority=2\nway.lane = highway=* ; width=2.5\n")
    tax = load_taxonomy(p)
    assert tax.version == 3
    assert classify_element({"highway": "x"}, tax).way_width_m == 2.5


@pytest.mark.parametrize(
    "text",
    [
        "area.x = building=yes\n",  # missing version
        "version = 1\nblob.x = a=b\n",
        "version = 1\narea.x = a=b ; width=2\n",
        "version = 1\narea.x = a=b\narea.x = c=d\n",
        "version = 1\narea.x = nonsense\n",
    ],
)
def test_rejects_bad_rules(text):
    with pytest.raises(TaxonomyError):
        parse_taxonomy(text)
