"""OSM XML parsing, local tangent-plane projection and vector geometry assembly."""
from __future__ import annotations

import math
import xml.parsers.expat
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .poses import LocalPoint
from .taxonomy import ClassTaxonomy, Group, classify_element

# WGS84
_A = 6378137.0
_E2 = 6.69437999014e-3


class OsmParseError(ValueError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class OutOfFrameError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinates out of range: lat={self.lat}, lon={self.lon}")


@dataclass(frozen=True)
class OsmNode:
    id: int
    point: GeoPoint
    tags: dict


@dataclass(frozen=True)
class OsmWay:
    id: int
    refs: tuple
    tags: dict

    @property
    def closed(self) -> bool:
        return len(self.refs) >= 4 and self.refs[0] == self.refs[-1]


@dataclass(frozen=True)
class RelationMember:
    type: str
    ref: int
    role: str


@dataclass(frozen=True)
class OsmRelation:
    id: int
    members: tuple
    tags: dict


@dataclass
class ParseReport:
    dangling_ways: int = 0
    short_ways: int = 0
    element_errors: list = field(default_factory=list)
    demoted_areas: int = 0
    unassembled_relations: int = 0


@dataclass
class OsmDocument:
    nodes: dict
    ways: dict
    relations: dict
    report: ParseReport


class _Handler:
    def __init__(self, parser):
        self.parser = parser
        self.nodes = {}
        self.ways = {}
        self.relations = {}
        self.report = ParseReport()
        self._current = None  # (kind, attrs, tags, refs/members) of the open element
        self._skip = False

    def _error(self, kind, attrs, reason):
        self.report.element_errors.append(
            f"{kind} {attrs.get('id', '?')} at byte {self.parser.CurrentByteIndex}: {reason}"
        )

    def start(self, name, attrs):
        if name in ("node", "way", "relation"):
            self._current = [name, dict(attrs), {}, []]
            self._skip = False
            if "id" not in attrs:
                self._error(name, attrs, "missing id")
                self._skip = True
            if name == "node" and ("lat" not in attrs or "lon" not in attrs):
                self._error(name, attrs, "missing lat/lon")
                self._skip = True
        elif self._current is None:
            return
        elif name == "tag":
            if "k" in attrs and "v" in attrs:
                self._current[2][attrs["k"]] = attrs["v"]
        elif name == "nd" and self._current[0] == "way":
            try:
                self._current[3].append(int(attrs["ref"]))
            except (KeyError, ValueError):
                self._error("way", self._current[1], "bad nd ref")
                self._skip = True
        elif name == "member" and self._current[0] == "relation":
            try:
                self._current[3].append(RelationMember(attrs["type"], int(attrs["ref"]), attrs.get("role", "")))
            except (KeyError, ValueError):
                self._error("relation", self._current[1], "bad member")

    def end(self, name):
        if self._current is None or name != self._current[0]:
            return
        kind, attrs, tags, items = self._current
        self._current = None
        if self._skip:
            return
        try:
            eid = int(attrs["id"])
            if kind == "node":
                self.nodes[eid] = OsmNode(eid, GeoPoint(float(attrs["lat"]), float(attrs["lon"])), tags)
            elif kind == "way":
                self.ways[eid] = OsmWay(eid, tuple(items), tags)
            else:
                self.relations[eid] = OsmRelation(eid, tuple(items), tags)
        except ValueError as exc:
            self._error(kind, attrs, str(exc))


def parse_osm_xml(data: bytes) -> OsmDocument:
    """Parse an OSM v0.6 XML document.

    Ways that reference missing nodes or have fewer than two node refs are
    dropped and counted in the report. Elements lacking required attributes
    are skipped and listed in ``report.element_errors``.
    """
    parser = xml.parsers.expat.ParserCreate()
    handler = _Handler(parser)
    parser.StartElementHandler = handler.start
    parser.EndElementHandler = handler.end
    try:
        parser.Parse(data, True)
    except xml.parsers.expat.ExpatError as exc:
        raise OsmParseError(xml.parsers.expat.ErrorString(exc.code), parser.ErrorByteIndex) from None

    ways = {}
    for wid, way in handler.ways.items():
        if len(way.refs) < 2:
            handler.report.short_ways += 1
        elif any(r not in handler.nodes for r in way.refs):
            handler.report.dangling_ways += 1
        else:
            ways[wid] = way
    return OsmDocument(handler.nodes, ways, handler.relations, handler.report)


def meters_per_degree(lat: float) -> tuple[float, float]:
    """WGS84 (lat, lon) degree lengths in meters at latitude ``lat``."""
    phi = math.radians(lat)
    w = math.sqrt(1.0 - _E2 * math.sin(phi) ** 2)
    meridional = _A * (1.0 - _E2) / w**3
    normal = _A / w
    return meridional * math.pi / 180.0, normal * math.cos(phi) * math.pi / 180.0


@dataclass(frozen=True)
class LocalFrame:
    origin: GeoPoint
    meters_per_degree_lat: float
    meters_per_degree_lon: float

    def __post_init__(self):
        if self.meters_per_degree_lat <= 0 or self.meters_per_degree_lon <= 0:
            raise ValueError("degree lengths must be positive")

    @classmethod
    def at(cls, origin: GeoPoint) -> "LocalFrame":
        mlat, mlon = meters_per_degree(origin.lat)
        return cls(origin, mlat, mlon)


def project_to_local(p: GeoPoint, frame: LocalFrame) -> LocalPoint:
    if abs(p.lat - frame.origin.lat) >= 1.0:
        raise OutOfFrameError(f"latitude {p.lat} too far from frame origin {frame.origin.lat}")
    dlon = (p.lon - frame.origin.lon + 180.0) % 360.0 - 180.0
    return LocalPoint(dlon * frame.meters_per_degree_lon, (p.lat - frame.origin.lat) * frame.meters_per_degree_lat)


def local_to_geo(q: LocalPoint, frame: LocalFrame) -> GeoPoint:
    lon = frame.origin.lon + q.x / frame.meters_per_degree_lon
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(frame.origin.lat + q.y / frame.meters_per_degree_lat, lon)


@dataclass(frozen=True)
class VectorCanvas:
    polygons: tuple  # (rings, SemanticClass); each ring an (n, 2) array, closed
    polylines: tuple  # (vertices (n, 2), SemanticClass)
    points: tuple  # (LocalPoint, SemanticClass)

    @classmethod
    def empty(cls) -> "VectorCanvas":
        return cls((), (), ())

    def translated(self, dx: float, dy: float) -> "VectorCanvas":
        off = np.array([dx, dy])
        return VectorCanvas(
            tuple((tuple(r + off for r in rings), c) for rings, c in self.polygons),
            tuple((v + off, c) for v, c in self.polylines),
            tuple((LocalPoint(p.x + dx, p.y + dy), c) for p, c in self.points),
        )


def _assemble_rings(segments: list[list[int]]) -> tuple[list[list[int]], int]:
    """Join way node lists end to end into closed rings. Returns rings and leftover count."""
    pending = [list(s) for s in segments]
    rings = []
    while pending:
        ring = pending.pop(0)
        progress = True
        while ring[0] != ring[-1] and progress:
            progress = False
            for i, seg in enumerate(pending):
                if seg[0] == ring[-1]:
                    ring.extend(seg[1:])
                elif seg[-1] == ring[-1]:
                    ring.extend(reversed(seg[:-1]))
                elif seg[-1] == ring[0]:
                    ring = seg[:-1] + ring
                elif seg[0] == ring[0]:
                    ring = list(reversed(seg[1:])) + ring
                else:
                    continue
                pending.pop(i)
                progress = True
                break
        if ring[0] == ring[-1] and len(ring) >= 4:
            rings.append(ring)
        else:
            return rings, len(pending) + 1
    return rings, 0


def build_geometry(doc: OsmDocument, frame: LocalFrame, taxonomy: ClassTaxonomy) -> VectorCanvas:
    """Classify and project a parsed document into local-meter vector geometry.

    Elements whose nodes fall outside the frame's validity region are dropped.
    """
    local = {}
    for nid, node in doc.nodes.items():
        try:
            q = project_to_local(node.point, frame)
        except OutOfFrameError:
            continue
        local[nid] = (q.x, q.y)

    def coords_of(refs) -> Optional[np.ndarray]:
        if any(r not in local for r in refs):
            return None
        return np.array([local[r] for r in refs], dtype=float)

    polygons, polylines, points = [], [], []
    for way in doc.ways.values():
        cls = classify_element(way.tags, taxonomy, (Group.AREA, Group.WAY))
        if cls is None:
            continue
        coords = coords_of(way.refs)
        if coords is None:
            continue
        if cls.group == Group.AREA:
            if way.closed:
                polygons.append(((coords,), cls))
            else:
                # unclosed area: stroked as a 1 m outline into the area plane
                doc.report.demoted_areas += 1
                polylines.append((coords, replace(cls, way_width_m=1.0)))
        else:
            polylines.append((coords, cls))

    for rel in doc.relations.values():
        if rel.tags.get("type") != "multipolygon":
            continue
        cls = classify_element(rel.tags, taxonomy, (Group.AREA,))
        if cls is None:
            continue
        rings = []
        ok = True
        for role in ("outer", "inner"):
            segs = [
                list(doc.ways[m.ref].refs)
                for m in rel.members
                if m.type == "way" and m.role == role and m.ref in doc.ways
            ]
            if not segs:
                continue
            assembled, leftover = _assemble_rings(segs)
            if leftover:
                ok = False
            for ring in assembled:
                coords = coords_of(ring)
                if coords is None:
                    ok = False
                    continue
                rings.append(coords)
        if not ok or not rings:
            doc.report.unassembled_relations += 1
        if rings:
            polygons.append((tuple(rings), cls))

    for node in doc.nodes.values():
        if not node.tags or node.id not in local:
            continue
        cls = classify_element(node.tags, taxonomy, (Group.NODE,))
        if cls is not None:
            points.append((LocalPoint(*local[node.id]), cls))

    return VectorCanvas(tuple(polygons), tuple(polylines), tuple(points))
