"""Lift image-plane features to a birds-eye-view grid through per-pixel depth distributions.

Image lattice axes: ``u`` indexes rows (height U), ``v`` indexes columns
(width V). Each column is a vertical slice of the frustum at one azimuth, so
collapsing over ``u`` yields a polar grid over (depth bin, column).

The Cartesian BEV grid has ``D`` forward rows and ``L`` lateral columns; row
``r`` sits ``d0 + (r + 1) * delta`` meters ahead of the camera and column
``l`` sits ``(l - (L - 1) / 2) * gsd`` meters to its right.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensors import FeatureGrid, FrameTag


class SimplexError(ValueError):
    pass


class DegenerateNormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    cx: float
    cols: int  # V
    rows: int  # U

    def __post_init__(self):
        if self.fx <= 0:
            raise ValueError("fx must be positive")
        if not 0 <= self.cx < self.cols:
            raise ValueError(f"cx={self.cx} outside [0, {self.cols})")
        if self.rows < 1:
            raise ValueError("rows must be >= 1")


@dataclass(frozen=True)
class DepthBins:
    d0: float = 0.0
    delta: float = 0.5
    D: int = 64

    def __post_init__(self):
        if self.delta <= 0 or self.D < 1:
            raise ValueError("need delta > 0 and D >= 1")

    @property
    def centers(self) -> np.ndarray:
        return self.d0 + self.delta * np.arange(1, self.D + 1)

    @property
    def max_range(self) -> float:
        return self.d0 + self.D * self.delta


@dataclass(frozen=True)
class DepthDistribution:
    probs: np.ndarray  # (U, V, D)

    def __post_init__(self):
        if self.probs.ndim != 3:
            raise ValueError(f"depth distribution must be (U, V, D), got {self.probs.shape}")

    def check(self, tol: float = 1e-6) -> "DepthDistribution":
        p = self.probs
        if (p < 0).any():
            u, v, i = np.argwhere(p < 0)[0]
            raise SimplexError(f"negative probability {p[u, v, i]} at pixel ({u}, {v}) bin {i}")
        err = np.abs(p.sum(axis=2) - 1.0)
        if err.max() > tol:
            u, v = np.unravel_index(np.argmax(err), err.shape)
            raise SimplexError(f"depth distribution at pixel ({u}, {v}) sums to {p[u, v].sum():.9f}")
        return self

    @classmethod
    def one_hot(cls, bins_idx: np.ndarray, D: int) -> "DepthDistribution":
        probs = np.zeros(bins_idx.shape + (D,))
        np.put_along_axis(probs, bins_idx[..., None], 1.0, axis=2)
        return cls(probs)


def bev_cell_offsets(bins: DepthBins, L: int, gsd: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward distances (D,) and lateral offsets (L,) of the Cartesian BEV cells."""
    return bins.centers, (np.arange(L) - (L - 1) / 2) * gsd


def _check_shapes(F_img: FeatureGrid, alpha: DepthDistribution):
    F_img.require(FrameTag.IMAGE_PLANE)
    if alpha.probs.shape[:2] != F_img.data.shape[:2]:
        raise ValueError(f"depth distribution {alpha.probs.shape[:2]} does not match features {F_img.data.shape[:2]}")
    alpha.check()


def scatter_to_frustum(F_img: FeatureGrid, alpha: DepthDistribution) -> np.ndarray:
    """Frustum features ``F_pc[u, i, v, :] = alpha[u, v, i] * F_img[u, v, :]``, shape (U, D, V, C)."""
    _check_shapes(F_img, alpha)
    return np.einsum("uvi,uvc->uivc", alpha.probs, F_img.data)


def collapse_to_polar(frustum: np.ndarray, alpha: DepthDistribution, single_weighting: bool = False) -> FeatureGrid:
    """Sum frustum points of each column into a (D, V, C) polar grid.

    By default each point is weighted by its depth probability again, as in
    ``F_bev(i, v) = sum_u alpha[u, v, i] * F_pc[u, i, v]``. With
    ``single_weighting`` the frustum points are summed unweighted.
    """
    if single_weighting:
        polar = frustum.sum(axis=0)
    else:
        polar = np.einsum("uvi,uivc->ivc", alpha.probs, frustum)
    return FeatureGrid(polar, FrameTag.POLAR_BEV)


def lift_to_polar(F_img: FeatureGrid, alpha: DepthDistribution, single_weighting: bool = False) -> FeatureGrid:
    """Fused ``collapse_to_polar(scatter_to_frustum(...))`` without the U*D*V*C intermediate."""
    _check_shapes(F_img, alpha)
    w = alpha.probs if single_weighting else alpha.probs**2
    return FeatureGrid(np.einsum("uvi,uvc->ivc", w, F_img.data), FrameTag.POLAR_BEV)


def expected_depth(alpha: DepthDistribution, bins: DepthBins) -> np.ndarray:
    alpha.check()
    if alpha.probs.shape[2] != bins.D:
        raise ValueError(f"distribution has {alpha.probs.shape[2]} bins, expected {bins.D}")
    return alpha.probs @ bins.centers


@lru_cache(maxsize=16)
def _polar_lookup(cam: CameraIntrinsics, bins: DepthBins, L: int, gsd: float):
    forward, lateral = bev_cell_offsets(bins, L, gsd)
    f = forward[:, None]
    s = lateral[None, :]
    rho = np.hypot(f, s)
    i_f = (rho - bins.d0) / bins.delta - 1.0
    v_f = cam.cx + cam.fx * s / f
    inside = (i_f >= -0.5) & (i_f < bins.D - 0.5) & (v_f >= -0.5) & (v_f < cam.cols - 0.5)
    i0 = np.floor(i_f).astype(np.int64)
    v0 = np.floor(v_f).astype(np.int64)
    fi = i_f - i0
    fv = v_f - v0
    idx, wts = [], []
    for di, wi in ((0, 1 - fi), (1, fi)):
        for dv, wv in ((0, 1 - fv), (1, fv)):
            ii, vv = i0 + di, v0 + dv
            ok = inside & (ii >= 0) & (ii < bins.D) & (vv >= 0) & (vv < cam.cols)
            idx.append((np.clip(ii, 0, bins.D - 1), np.clip(vv, 0, cam.cols - 1)))
            wts.append(np.where(ok, wi * wv, 0.0))
    wts = np.stack(wts)
    total = wts.sum(axis=0)
    # partial support at the frustum border is renormalised over in-bounds neighbours
    wts = np.where(total > 0, wts / np.where(total > 0, total, 1.0), 0.0)
    return idx, wts


def polar_to_cartesian(
    polar: FeatureGrid, cam: CameraIntrinsics, bins: DepthBins, L: int = 129, gsd: float = 0.5
) -> FeatureGrid:
    """Resample a (D, V, C) polar grid onto the (D, L, C) Cartesian BEV grid.

    Cells outside the frustum (azimuth beyond the image or range beyond the
    bins) are zero.
    """
    polar.require(FrameTag.POLAR_BEV)
    if polar.rows != bins.D or polar.cols != cam.cols:
        raise ValueError(f"polar grid {polar.data.shape[:2]} does not match bins/camera ({bins.D}, {cam.cols})")
    if L % 2 == 0:
        raise ValueError("L must be odd so the optical axis falls on a grid column")
    idx, wts = _polar_lookup(cam, bins, L, float(gsd))
    out = np.zeros((bins.D, L, polar.channels))
    for (ii, vv), w in zip(idx, wts):
        out += polar.data[ii, vv] * w[..., None]
    return FeatureGrid(out, FrameTag.CARTESIAN_BEV)


def image_to_bev(
    F_img: FeatureGrid,
    alpha: DepthDistribution,
    cam: CameraIntrinsics,
    bins: DepthBins,
    L: int = 129,
    gsd: float = 0.5,
    single_weighting: bool = False,
) -> FeatureGrid:
    return polar_to_cartesian(lift_to_polar(F_img, alpha, single_weighting), cam, bins, L, gsd)


def depth_to_normalized_disparity(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    if (depth <= 0).any():
        raise ValueError("depths must be positive")
    t = 1.0 / depth
    lo, hi = t.min(), t.max()
    if hi <= lo:
        raise DegenerateNormalizationError("constant depth map has no disparity range")
    return (t - lo) / (hi - lo)


def disparity_loss(pred: np.ndarray, pseudo_gt: np.ndarray) -> float:
    """Mean absolute difference between two normalized disparity maps."""
    pred = np.asarray(pred, dtype=float)
    pseudo_gt = np.asarray(pseudo_gt, dtype=float)
    if pred.shape != pseudo_gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {pseudo_gt.shape}")
    return float(np.mean(np.abs(pred - pseudo_gt)))
