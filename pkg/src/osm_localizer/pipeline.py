"""Single-frame localization: image features to BEV, match against the map, pick the best pose."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bev_transform import CameraIntrinsics, DepthBins, DepthDistribution, image_to_bev
from .feature_model import ChannelAdapter
from .pose_matcher import (
    MatchConfig,
    PoseVolume,
    TemplateGeometry,
    argmax_pose,
    restrict_mask,
    score_poses,
    softmax_volume,
)
from .poses import Pose
from .rasterizer import MapTile
from .tensors import FeatureGrid, FrameTag


@dataclass(frozen=True)
class LocalizeResult:
    pose: Pose
    flat_index: int
    cell: tuple  # (h, w, k)
    scores: PoseVolume
    probs: PoseVolume

    @property
    def probability(self) -> float:
        return float(self.probs.values.ravel()[self.flat_index])


def localize(
    tile: MapTile,
    map_features: FeatureGrid,
    F_img: FeatureGrid,
    alpha: DepthDistribution,
    cam: CameraIntrinsics,
    bins: DepthBins,
    L: int = 129,
    match: MatchConfig = MatchConfig(),
    prior: Optional[Pose] = None,
    restrict: Optional[tuple[float, float]] = None,
    adapter_seed: int = 0,
    single_weighting: bool = False,
) -> LocalizeResult:
    """Locate the camera of ``F_img`` in ``tile``.

    ``restrict = (meters, degrees)`` limits candidates to a box around ``prior``.
    BEV features whose channel count differs from the map's pass through a
    seeded channel adapter first.
    """
    map_features.require(FrameTag.MAP_PLANE)
    gsd = tile.raster.gsd
    bev = image_to_bev(F_img, alpha, cam, bins, L, gsd, single_weighting)
    if bev.channels != map_features.channels:
        bev = ChannelAdapter.build(bev.channels, map_features.channels, adapter_seed).apply(bev)
    geom = TemplateGeometry(bins, L, gsd, gsd)
    S = score_poses(map_features, bev, match, geom, tile.raster.origin)
    mask = match.restrict
    if restrict is not None:
        if prior is None:
            raise ValueError("restriction needs a prior pose")
        mask = restrict_mask(S.shape, gsd, tile.raster.origin, prior, restrict[0], restrict[1])
        if match.restrict is not None:
            mask = mask & match.restrict
    P = softmax_volume(S, mask)
    pose, flat = argmax_pose(P)
    cell = tuple(int(v) for v in np.unravel_index(flat, P.shape))
    return LocalizeResult(pose, flat, cell, S, P)


def cell_distance(a: tuple, b: tuple, K: int) -> tuple[int, int, int]:
    """Absolute (row, column, circular heading-bin) offsets between two volume cells."""
    dk = abs(a[2] - b[2]) % K
    return abs(a[0] - b[0]), abs(a[1] - b[1]), min(dk, K - dk)


def degrees_pose(x: float, y: float, theta_deg: float) -> Pose:
    return Pose(x, y, math.radians(theta_deg))
