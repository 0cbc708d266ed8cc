"""Seeded synthetic inputs: OSM neighbourhoods, trajectories and observation volumes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import quoteattr

import numpy as np

from .osm_ingest import GeoPoint, LocalFrame, local_to_geo
from .poses import LocalPoint, Pose, wrap_angle
from .pose_matcher import PoseVolume, theta_bins

DEFAULT_ORIGIN = GeoPoint(48.137, 11.575)


class _OsmWriter:
    def __init__(self, frame: LocalFrame):
        self.frame = frame
        self.nodes = []  # (id, lat, lon, tags)
        self.ways = []  # (id, refs, tags)
        self.relations = []  # (id, members, tags)
        self._next = 1

    def _id(self) -> int:
        i = self._next
        self._next += 1
        return i

    def node(self, x: float, y: float, tags=None) -> int:
        g = local_to_geo(LocalPoint(x, y), self.frame)
        nid = self._id()
        self.nodes.append((nid, g.lat, g.lon, tags or {}))
        return nid

    def way(self, coords, tags, closed=False) -> int:
        refs = [self.node(x, y) for x, y in coords]
        if closed:
            refs.append(refs[0])
        wid = self._id()
        self.ways.append((wid, refs, tags))
        return wid

    def relation(self, members, tags) -> int:
        rid = self._id()
        self.relations.append((rid, members, tags))
        return rid

    def to_xml(self) -> bytes:
        out = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6" generator="osm_localizer.synthetic">']

        def tag_lines(tags):
            return [f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>" for k, v in sorted(tags.items())]

        for nid, lat, lon, tags in self.nodes:
            if tags:
                out.append(f'  <node id="{nid}" lat="{lat:.9f}" lon="{lon:.9f}">')
                out.extend(tag_lines(tags))
                out.append("  </node>")
            else:
                out.append(f'  <node id="{nid}" lat="{lat:.9f}" lon="{lon:.9f}"/>')
        for wid, refs, tags in self.ways:
            out.append(f'  <way id="{wid}">')
            out.extend(f'    <nd ref="{r}"/>' for r in refs)
            out.extend(tag_lines(tags))
            out.append("  </way>")
        for rid, members, tags in self.relations:
            out.append(f'  <relation id="{rid}">')
            out.extend(f'    <member type="way" ref="{ref}" role="{role}"/>' for ref, role in members)
            out.extend(tag_lines(tags))
            out.append("  </relation>")
        out.append("</osm>")
        return ("\n".join(out) + "\n").encode("utf-8")


def _rect(cx, cy, w, h, angle):
    c, s = math.cos(angle), math.sin(angle)
    corners = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
    return [(cx + c * x - s * y, cy + s * x + c * y) for x, y in corners]


def _blob(rng, cx, cy, radius, n=7):
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radii = radius * rng.uniform(0.6, 1.0, n)
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angles, radii)]


def _wiggly_line(rng, start, end, n=5, jitter=6.0):
    t = np.linspace(0, 1, n)
    pts = np.outer(1 - t, start) + np.outer(t, end)
    d = np.asarray(end, float) - np.asarray(start, float)
    normal = np.array([-d[1], d[0]]) / (np.linalg.norm(d) + 1e-12)
    offs = rng.normal(0, jitter, n)
    offs[0] = offs[-1] = 0
    return [tuple(p + o * normal) for p, o in zip(pts, offs)]


def generate_neighborhood_osm(
    seed: int = 0,
    size_m: float = 160.0,
    origin: GeoPoint = DEFAULT_ORIGIN,
    n_buildings: int = 90,
    n_areas: int = 14,
) -> bytes:
    """An irregular block of roads, buildings, green areas and street furniture.

    Geometry spans ``[-size_m / 2, size_m / 2]`` on both axes of the local
    frame anchored at ``origin``.
    """
    rng = np.random.default_rng(seed)
    w = _OsmWriter(LocalFrame.at(origin))
    half = size_m / 2
    roads = []

    for _ in range(2):
        a = rng.uniform(-np.pi, np.pi)
        off = rng.uniform(-half / 3, half / 3, 2)
        d = np.array([math.cos(a), math.sin(a)]) * half * 1.4
        line = _wiggly_line(rng, off - d, off + d, n=6, jitter=5.0)
        w.way(line, {"highway": "primary", "name": "Main"})
        roads.append(line)
    for _ in range(4):
        p = rng.uniform(-half, half, 2)
        q = rng.uniform(-half, half, 2)
        line = _wiggly_line(rng, p, q, n=4, jitter=4.0)
        w.way(line, {"highway": rng.choice(["residential", "service"])})
        roads.append(line)
    for _ in range(4):
        p = rng.uniform(-half, half, 2)
        q = p + rng.uniform(-40, 40, 2)
        w.way(_wiggly_line(rng, p, q, n=4, jitter=3.0), {"highway": rng.choice(["footway", "path", "cycleway"])})
    p = rng.uniform(-half, half, 2)
    w.way([tuple(p), tuple(p + rng.uniform(-half, half, 2))], {"railway": "tram"})

    area_kinds = [
        {"landuse": "grass"},
        {"amenity": "parking"},
        {"natural": "water"},
        {"landuse": "forest"},
        {"leisure": "playground"},
        {"leisure": "park"},
    ]
    for i in range(n_areas):
        c = rng.uniform(-half, half, 2)
        w.way(_blob(rng, c[0], c[1], rng.uniform(6, 16)), area_kinds[i % len(area_kinds)], closed=True)

    for _ in range(n_buildings):
        c = rng.uniform(-half, half, 2)
        w.way(
            _rect(c[0], c[1], rng.uniform(5, 22), rng.uniform(5, 16), rng.uniform(0, np.pi)),
            {"building": rng.choice(["yes", "house", "apartments", "retail"])},
            closed=True,
        )

    # courtyard building as a multipolygon
    c = rng.uniform(-half / 2, half / 2, 2)
    outer = w.way(_rect(c[0], c[1], 24, 20, 0.3), {}, closed=True)
    inner = w.way(_rect(c[0], c[1], 10, 8, 0.3), {}, closed=True)
    w.relation([(outer, "outer"), (inner, "inner")], {"type": "multipolygon", "building": "yes"})

    for _ in range(60):
        x, y = rng.uniform(-half, half, 2)
        w.node(x, y, {"natural": "tree"})
    for line in roads[:3]:
        for p in line[1:-1]:
            w.node(p[0] + 4, p[1] + 4, {"highway": "street_lamp"})
    for tags in ({"highway": "crossing"}, {"highway": "traffic_signals"}, {"highway": "bus_stop"}, {"amenity": "bench"}, {"shop": "bakery"}):
        for _ in range(3):
            x, y = rng.uniform(-half, half, 2)
            w.node(x, y, tags)
    return w.to_xml()


@dataclass(frozen=True)
class Observation:
    volume: PoseVolume
    odometry: tuple  # (dx, dy, dtheta) in the previous pose frame; zeros for frame 0


def relative_motion(a: Pose, b: Pose) -> tuple[float, float, float]:
    """Motion from ``a`` to ``b`` expressed in ``a``'s frame (dx forward, dy left)."""
    dx, dy = b.x - a.x, b.y - a.y
    c, s = math.cos(a.theta), math.sin(a.theta)
    return c * dx + s * dy, -s * dx + c * dy, wrap_angle(b.theta - a.theta)


def generate_trajectory(rng: np.random.Generator, n_frames: int, start: Pose, min_step: float = 4.0, max_step: float = 6.0) -> list[Pose]:
    poses = [start]
    for _ in range(n_frames - 1):
        p = poses[-1]
        turn = rng.normal(0, 0.15)
        step = rng.uniform(min_step, max_step)
        th = p.theta + turn
        poses.append(Pose(p.x + step * math.cos(th), p.y + step * math.sin(th), th))
    return poses


def synthetic_score_volume(
    rng: np.random.Generator,
    gt: Pose,
    shape,
    gsd: float,
    origin: LocalPoint,
    n_distractors: int = 3,
    peak_sigma_m: float = 1.5,
    peak_sigma_rad: float = 0.15,
    distractor_height: tuple = (0.6, 1.3),
) -> PoseVolume:
    """Positive score volume with a peak at ``gt`` plus random distractor peaks.

    Distractors model the look-alike places that make single frames ambiguous;
    they are redrawn every call, so only the true peak moves consistently.
    """
    H, W, K = shape
    xs = origin.x + np.arange(W) * gsd
    ys = origin.y + np.arange(H) * gsd
    th = theta_bins(K)
    peaks = [(gt.x, gt.y, gt.theta, 1.0)]
    for _ in range(n_distractors):
        peaks.append(
            (
                rng.uniform(xs[0], xs[-1]),
                rng.uniform(ys[0], ys[-1]),
                rng.uniform(-np.pi, np.pi),
                rng.uniform(*distractor_height),
            )
        )
    vol = np.zeros((H, W, K))
    for px, py, pt, amp in peaks:
        gy = np.exp(-((ys - py) ** 2) / (2 * peak_sigma_m**2))
        gx = np.exp(-((xs - px) ** 2) / (2 * peak_sigma_m**2))
        dth = np.abs(np.mod(th - pt + np.pi, 2 * np.pi) - np.pi)
        gt_ = np.exp(-(dth**2) / (2 * peak_sigma_rad**2))
        vol += amp * gy[:, None, None] * gx[None, :, None] * gt_[None, None, :]
    return PoseVolume(vol, "score", gsd, origin)


@dataclass(frozen=True)
class SyntheticSequence:
    poses: list  # ground truth
    observations: list  # Observation per frame


def synthetic_sequence(
    rng: np.random.Generator,
    n_frames: int = 10,
    shape=(160, 160, 64),
    gsd: float = 1.0,
    origin: LocalPoint = LocalPoint(-80.0, -80.0),
    sigma_xy: float = 0.5,
    sigma_theta: float = 0.1 * np.pi,
    n_distractors: int = 3,
    start_box_m: float = 15.0,
) -> SyntheticSequence:
    """A trajectory with one score volume per frame and noisy odometry.

    Odometry is the true relative motion plus N(0, sigma_xy) on each axis of
    the previous pose frame and N(0, sigma_theta) on the heading change.
    """
    start = Pose(*rng.uniform(-start_box_m, start_box_m, 2), rng.uniform(-np.pi, np.pi))
    poses = generate_trajectory(rng, n_frames, start)
    obs = []
    for t, p in enumerate(poses):
        vol = synthetic_score_volume(rng, p, shape, gsd, origin, n_distractors)
        if t == 0:
            odo = (0.0, 0.0, 0.0)
        else:
            dx, dy, dth = relative_motion(poses[t - 1], p)
            ex, ey, eth = rng.normal(0.0, 1.0, 3) * (sigma_xy, sigma_xy, sigma_theta)
            odo = (dx + ex, dy + ey, float(wrap_angle(dth + eth)))
        obs.append(Observation(vol, odo))
    return SyntheticSequence(poses, obs)
