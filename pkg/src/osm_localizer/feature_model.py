"""Feature providers standing in for trained encoders.

Map tiles are embedded with a seeded per-class lookup table. Image features
and depth distributions come either from OSMF files or from a synthetic
generator that ray-casts the embedded map from a known pose, which gives
exact ground truth for the localization pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bev_transform import CameraIntrinsics, DepthBins, DepthDistribution, bev_cell_offsets
from .poses import Pose
from .rasterizer import CoverageError, MapTile
from .taxonomy import ClassTaxonomy, Group
from .tensors import FeatureGrid, FrameTag, load_feature_tensor, sample_bilinear, save_feature_tensor

__all__ = [
    "ChannelAdapter",
    "EmbeddingTable",
    "build_embedding_table",
    "embed_map",
    "load_feature_tensor",
    "save_feature_tensor",
    "synth_bev_template",
    "synth_image_features",
]

MAX_COSINE = 0.99


@dataclass(frozen=True)
class EmbeddingTable:
    tables: tuple  # one (n_classes + 1, C_sem) array per group; row 0 is void
    c_sem: int
    seed: int  # seed actually used, after any regeneration

    def group(self, g: Group) -> np.ndarray:
        return self.tables[int(g)]


def _unit_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    raw = rng.standard_normal((dim, max(n, 1)))
    if n <= dim:
        # random orthonormal set
        q, r = np.linalg.qr(raw)
        return (q * np.sign(np.diag(r))).T[:n]
    return (raw / np.linalg.norm(raw, axis=0)).T


def build_embedding_table(taxonomy: ClassTaxonomy, c_sem: int = 16, seed: int = 0, max_tries: int = 100) -> EmbeddingTable:
    """Seeded unit-norm class vectors; void maps to zero.

    Any pair of non-void vectors with cosine similarity >= 0.99 triggers a
    regeneration with the next seed.
    """
    if c_sem < 1:
        raise ValueError("c_sem must be >= 1")
    for attempt in range(max_tries):
        rng = np.random.default_rng(seed + attempt)
        tables = []
        for g in Group:
            n = taxonomy.size(g) - 1
            t = np.zeros((n + 1, c_sem))
            if n:
                t[1:] = _unit_vectors(rng, n, c_sem)
            tables.append(t)
        allv = np.vstack([t[1:] for t in tables])
        cos = allv @ allv.T
        np.fill_diagonal(cos, -np.inf)
        if allv.shape[0] < 2 or cos.max() < MAX_COSINE:
            for t in tables:
                t.setflags(write=False)
            return EmbeddingTable(tuple(tables), c_sem, seed + attempt)
    raise RuntimeError(f"no separable embedding found within {max_tries} seeds")


def embed_map(tile: MapTile, table: EmbeddingTable) -> FeatureGrid:
    """Concatenate area, way and node class vectors per pixel into a (H, W, 3 * C_sem) grid."""
    planes = tile.raster.planes
    parts = []
    for g in Group:
        t = table.group(g)
        ids = planes[int(g)]
        if ids.max(initial=0) >= t.shape[0]:
            i, j = np.argwhere(ids >= t.shape[0])[0]
            raise ValueError(f"class id {ids[i, j]} at pixel ({i}, {j}) plane {int(g)} not in embedding table")
        parts.append(t[ids])
    return FeatureGrid(np.concatenate(parts, axis=2), FrameTag.MAP_PLANE)


@dataclass(frozen=True)
class ChannelAdapter:
    """Fixed linear channel map standing in for a learned 1x1 convolution."""

    matrix: np.ndarray  # (C_in, C_out)

    @classmethod
    def build(cls, c_in: int, c_out: int, seed: int = 0) -> "ChannelAdapter":
        if c_in == c_out:
            return cls(np.eye(c_in))
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((c_in, c_out)) / np.sqrt(c_in))

    def __call__(self, data: np.ndarray) -> np.ndarray:
        if data.shape[-1] != self.matrix.shape[0]:
            raise ValueError(f"adapter expects {self.matrix.shape[0]} channels, got {data.shape[-1]}")
        return data @ self.matrix

    def apply(self, grid: FeatureGrid) -> FeatureGrid:
        return FeatureGrid(self(grid.data), grid.frame_tag)


def _map_indices(tile: MapTile, x, y):
    r = tile.raster
    return (np.asarray(y) - r.origin.y) / r.gsd, (np.asarray(x) - r.origin.x) / r.gsd


def _check_inside(tile: MapTile, pose: Pose):
    if not tile.contains(pose.x, pose.y):
        raise CoverageError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside tile coverage")


def synth_bev_template(
    map_features: FeatureGrid, tile: MapTile, pose: Pose, bins: DepthBins, L: int = 129, gsd: float = 0.5
) -> FeatureGrid:
    """Map features sampled directly at the Cartesian BEV cells seen from ``pose``.

    This is the perfectly aligned template: no frustum limits, no polar detour.
    """
    map_features.require(FrameTag.MAP_PLANE)
    _check_inside(tile, pose)
    forward, lateral = bev_cell_offsets(bins, L, gsd)
    fx, fy = pose.forward()
    rx, ry = pose.right()
    x = pose.x + forward[:, None] * fx + lateral[None, :] * rx
    y = pose.y + forward[:, None] * fy + lateral[None, :] * ry
    rows, cols = _map_indices(tile, x, y)
    return FeatureGrid(sample_bilinear(map_features.data, rows, cols), FrameTag.CARTESIAN_BEV)


def synth_image_features(
    tile: MapTile, table: EmbeddingTable, pose: Pose, cam: CameraIntrinsics, bins: DepthBins
) -> tuple[FeatureGrid, DepthDistribution]:
    """Image features and one-hot depth distributions that lift to the map seen from ``pose``.

    The bottom ``D`` image rows are assigned to depth bins nearest-first; row
    ``U - 1 - i`` carries the embedded map sampled at range bin ``i`` along each
    column's ray. Rows above those are zero-feature sky. Because every pixel
    has a one-hot distribution, the lifted polar grid equals the ray-cast map
    samples under either weighting convention.
    """
    if cam.rows < bins.D:
        raise ValueError(f"synthetic features need at least D={bins.D} image rows, camera has {cam.rows}")
    _check_inside(tile, pose)
    emb = embed_map(tile, table)
    v = np.arange(cam.cols)
    az = np.arctan2(v - cam.cx, cam.fx)  # positive to the right
    rho = bins.centers
    fx, fy = pose.forward()
    rx, ry = pose.right()
    f = rho[:, None] * np.cos(az)[None, :]
    s = rho[:, None] * np.sin(az)[None, :]
    x = pose.x + f * fx + s * rx
    y = pose.y + f * fy + s * ry
    rows, cols = _map_indices(tile, x, y)
    polar = sample_bilinear(emb.data, rows, cols)  # (D, V, C)

    U = cam.rows
    feats = np.zeros((U, cam.cols, emb.channels))
    bin_of_row = np.full(U, bins.D - 1, dtype=np.int64)
    ground = np.arange(bins.D)
    bin_of_row[U - 1 - ground] = ground
    feats[U - 1 - ground] = polar[ground]
    alpha = DepthDistribution.one_hot(np.broadcast_to(bin_of_row[:, None], (U, cam.cols)).copy(), bins.D)
    return FeatureGrid(feats, FrameTag.IMAGE_PLANE), alpha
