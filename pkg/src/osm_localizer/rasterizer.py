"""Rasterize vector geometry into a 3-plane semantic class grid and cut tiles from it.

Plane 0 holds area classes, plane 1 way classes and plane 2 node classes.
Pixel ``(i, j)`` covers the square of side ``gsd`` centred at
``origin + (j * gsd, i * gsd)``; rows therefore grow northwards.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .osm_ingest import VectorCanvas
from .poses import LocalPoint, Pose
from .taxonomy import ClassTaxonomy, Group

DEFAULT_GSD = 0.5
OSMR_MAGIC = b"OSMR"
OSMR_VERSION = 1
_OSMR_HEADER = struct.Struct("<4sHIIddd")


class CoverageError(ValueError):
    pass


class RasterFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RasterMap:
    planes: np.ndarray  # (3, height, width) uint8
    gsd: float
    origin: LocalPoint

    def __post_init__(self):
        if self.gsd <= 0:
            raise ValueError("gsd must be positive")
        if self.planes.ndim != 3 or self.planes.shape[0] != 3:
            raise ValueError(f"planes must have shape (3, H, W), got {self.planes.shape}")
        self.planes.setflags(write=False)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def pixel_center(self, i, j):
        return self.origin.x + np.asarray(j) * self.gsd, self.origin.y + np.asarray(i) * self.gsd

    def validate(self, taxonomy: ClassTaxonomy) -> None:
        for g in Group:
            bad = self.planes[g] >= taxonomy.size(g)
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise ValueError(f"invalid class id {self.planes[g, i, j]} in plane {int(g)} at pixel ({i}, {j})")

    def __eq__(self, other):
        if not isinstance(other, RasterMap):
            return NotImplemented
        return self.gsd == other.gsd and self.origin == other.origin and np.array_equal(self.planes, other.planes)


@dataclass(frozen=True)
class MapTile:
    raster: RasterMap
    center: LocalPoint

    @property
    def height_m(self) -> float:
        return self.raster.height * self.raster.gsd

    @property
    def width_m(self) -> float:
        return self.raster.width * self.raster.gsd

    def contains(self, x: float, y: float) -> bool:
        r = self.raster
        half = r.gsd / 2
        return (
            r.origin.x - half <= x < r.origin.x - half + self.width_m
            and r.origin.y - half <= y < r.origin.y - half + self.height_m
        )


def _fill_polygon(plane: np.ndarray, rings, cls_id: int, origin: LocalPoint, gsd: float) -> int:
    """Even-odd scanline fill sampled at pixel centres. Returns filled pixel count."""
    h, w = plane.shape
    edges = []
    for ring in rings:
        ring = np.asarray(ring, dtype=float)
        a, b = ring[:-1], ring[1:]
        edges.append(np.hstack([a, b]))
    if not edges:
        return 0
    e = np.vstack(edges)
    # pixel-index coordinates
    x0 = (e[:, 0] - origin.x) / gsd
    y0 = (e[:, 1] - origin.y) / gsd
    x1 = (e[:, 2] - origin.x) / gsd
    y1 = (e[:, 3] - origin.y) / gsd
    keep = y0 != y1
    x0, y0, x1, y1 = x0[keep], y0[keep], x1[keep], y1[keep]
    if x0.size == 0:
        return 0
    ymin = np.minimum(y0, y1)
    ymax = np.maximum(y0, y1)
    r0 = max(int(np.ceil(ymin.min())), 0)
    r1 = min(int(np.ceil(ymax.max())) - 1, h - 1)
    count = 0
    for i in range(r0, r1 + 1):
        # half-open rule: an edge spans row i when ymin <= i < ymax
        act = (ymin <= i) & (i < ymax)
        if not act.any():
            continue
        t = (i - y0[act]) / (y1[act] - y0[act])
        xs = np.sort(x0[act] + t * (x1[act] - x0[act]))
        for xa, xb in zip(xs[0::2], xs[1::2]):
            j0 = max(int(np.ceil(xa)), 0)
            j1 = min(int(np.ceil(xb)) - 1, w - 1)
            if j1 >= j0:
                plane[i, j0 : j1 + 1] = cls_id
                count += j1 - j0 + 1
    return count


def _stroke_polyline(plane: np.ndarray, verts, cls_id: int, width_m: float, origin: LocalPoint, gsd: float) -> None:
    h, w = plane.shape
    half = max(width_m / 2.0, gsd / 2.0) / gsd  # in pixels; at least half a pixel so thin lines stay connected
    v = (np.asarray(verts, dtype=float) - [origin.x, origin.y]) / gsd
    for (ax, ay), (bx, by) in zip(v[:-1], v[1:]):
        j0 = max(int(np.floor(min(ax, bx) - half)), 0)
        j1 = min(int(np.ceil(max(ax, bx) + half)), w - 1)
        i0 = max(int(np.floor(min(ay, by) - half)), 0)
        i1 = min(int(np.ceil(max(ay, by) + half)), h - 1)
        if j1 < j0 or i1 < i0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        if seg2 > 0:
            t = np.clip(((jj - ax) * dx + (ii - ay) * dy) / seg2, 0.0, 1.0)
        else:
            t = np.zeros(jj.shape)
        d2 = (jj - ax - t * dx) ** 2 + (ii - ay - t * dy) ** 2
        sub = plane[i0 : i1 + 1, j0 : j1 + 1]
        sub[d2 <= half * half] = cls_id


def rasterize(canvas: VectorCanvas, bounds, gsd: float = DEFAULT_GSD) -> RasterMap:
    """Rasterize ``canvas`` over ``bounds = (xmin, ymin, xmax, ymax)`` in local meters.

    Within each plane features are painted in ascending draw priority, so
    higher-priority classes overwrite lower ones; equal priorities keep input order.
    """
    xmin, ymin, xmax, ymax = map(float, bounds)
    if gsd <= 0:
        raise ValueError("gsd must be positive")
    if xmax <= xmin or ymax <= ymin:
        raise ValueError(f"degenerate bounds {bounds}")
    width = int(round((xmax - xmin) / gsd))
    height = int(round((ymax - ymin) / gsd))
    if width < 1 or height < 1:
        raise ValueError(f"bounds {bounds} smaller than one pixel at gsd {gsd}")
    origin = LocalPoint(xmin + gsd / 2, ymin + gsd / 2)
    planes = np.zeros((3, height, width), dtype=np.uint8)

    items = []
    for rings, cls in canvas.polygons:
        items.append((cls.draw_priority, len(items), "poly", rings, cls))
    for verts, cls in canvas.polylines:
        items.append((cls.draw_priority, len(items), "line", verts, cls))
    for pt, cls in canvas.points:
        items.append((cls.draw_priority, len(items), "point", pt, cls))
    items.sort(key=lambda t: (t[0], t[1]))

    for _, _, kind, geom, cls in items:
        plane = planes[int(cls.group)]
        if kind == "poly":
            _fill_polygon(plane, geom, cls.class_id, origin, gsd)
        elif kind == "line":
            _stroke_polyline(plane, geom, cls.class_id, cls.way_width_m, origin, gsd)
        else:
            j = int(np.floor((geom.x - origin.x) / gsd + 0.5))
            i = int(np.floor((geom.y - origin.y) / gsd + 0.5))
            if 0 <= i < height and 0 <= j < width:
                plane[i, j] = cls.class_id
    return RasterMap(planes, gsd, origin)


def crop_tile(raster: RasterMap, center: LocalPoint, size_m: float) -> MapTile:
    """Axis-aligned crop of ``size_m`` meters centred on ``center``, zero-padded outside the raster."""
    n = int(round(size_m / raster.gsd))
    if n < 1:
        raise ValueError(f"tile size {size_m} m is below one pixel")
    jc = (center.x - raster.origin.x) / raster.gsd
    ic = (center.y - raster.origin.y) / raster.gsd
    j0 = int(np.floor(jc - (n - 1) / 2 + 0.5))
    i0 = int(np.floor(ic - (n - 1) / 2 + 0.5))
    si0, si1 = max(i0, 0), min(i0 + n, raster.height)
    sj0, sj1 = max(j0, 0), min(j0 + n, raster.width)
    if si1 <= si0 or sj1 <= sj0:
        raise CoverageError(f"tile at ({center.x:.2f}, {center.y:.2f}) does not intersect the raster")
    planes = np.zeros((3, n, n), dtype=np.uint8)
    planes[:, si0 - i0 : si1 - i0, sj0 - j0 : sj1 - j0] = raster.planes[:, si0:si1, sj0:sj1]
    origin = LocalPoint(raster.origin.x + j0 * raster.gsd, raster.origin.y + i0 * raster.gsd)
    return MapTile(RasterMap(planes, raster.gsd, origin), center)


def sample_prior(gt_pose: Pose, max_offset_m: float = 32.0, rng_seed: int = 0) -> LocalPoint:
    """Uniform sample from the disc of radius ``max_offset_m`` around the pose position."""
    if max_offset_m < 0:
        raise ValueError("max_offset_m must be non-negative")
    if max_offset_m == 0:
        return LocalPoint(gt_pose.x, gt_pose.y)
    rng = np.random.default_rng(rng_seed)
    r = max_offset_m * np.sqrt(rng.random())
    phi = 2 * np.pi * rng.random()
    return LocalPoint(gt_pose.x + r * np.cos(phi), gt_pose.y + r * np.sin(phi))


def write_osmr(raster: RasterMap) -> bytes:
    header = _OSMR_HEADER.pack(
        OSMR_MAGIC, OSMR_VERSION, raster.width, raster.height, raster.gsd, raster.origin.x, raster.origin.y
    )
    return header + np.ascontiguousarray(raster.planes, dtype=np.uint8).tobytes()


def read_osmr(data: bytes) -> RasterMap:
    if len(data) < _OSMR_HEADER.size:
        raise RasterFormatError("truncated OSMR header")
    magic, version, width, height, gsd, ox, oy = _OSMR_HEADER.unpack_from(data)
    if magic != OSMR_MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}")
    if version != OSMR_VERSION:
        raise RasterFormatError(f"unsupported OSMR version {version}")
    expected = 3 * width * height
    payload = data[_OSMR_HEADER.size :]
    if len(payload) != expected:
        raise RasterFormatError(f"payload has {len(payload)} bytes, header implies {expected}")
    planes = np.frombuffer(payload, dtype=np.uint8).reshape(3, height, width).copy()
    return RasterMap(planes, gsd, LocalPoint(ox, oy))


def save_raster(raster: RasterMap, path) -> None:
    Path(path).write_bytes(write_osmr(raster))


def load_raster(path) -> RasterMap:
    return read_osmr(Path(path).read_bytes())
