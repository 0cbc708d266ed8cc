"""Exhaustive 3-DoF pose scoring of a BEV template against map features.

The pose volume covers every map cell ``(h, w)`` and ``K`` headings at bin
centres ``theta_k = -pi + 2 pi (k + 1/2) / K``. Cell ``(h, w)`` sits at
``origin + (w * gsd, h * gsd)``.

For each heading the BEV template is rotated about the camera position into
a square canvas aligned with the map lattice; the score of a pose is the
inner product of that canvas with the map window around the pose, divided by
``D * L``. The brute-force and FFT backends evaluate this same sum.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .bev_transform import DepthBins, bev_cell_offsets
from .feature_model import ChannelAdapter
from .rasterizer import CoverageError
from .poses import LocalPoint, Pose, angle_diff, wrap_angle
from .tensors import FeatureGrid, FrameTag, sample_bilinear


def theta_bins(K: int) -> np.ndarray:
    return -np.pi + 2 * np.pi * (np.arange(K) + 0.5) / K


def fft_workers() -> int:
    env = os.environ.get("OSMLOC_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


@dataclass(frozen=True)
class TemplateGeometry:
    """Metric layout of a Cartesian BEV template relative to the map lattice."""

    bins: DepthBins = field(default_factory=DepthBins)
    L: int = 129
    lateral_res: float = 0.5
    map_gsd: float = 0.5

    @property
    def radius(self) -> int:
        far = math.hypot(self.bins.max_range, (self.L - 1) / 2 * self.lateral_res)
        return int(math.ceil(far / self.map_gsd)) + 1

    @property
    def canvas_size(self) -> int:
        return 2 * self.radius + 1


@dataclass
class PoseVolume:
    values: np.ndarray  # (H, W, K)
    kind: str  # "score" or "probability"
    gsd: float
    origin: LocalPoint

    def __post_init__(self):
        if self.kind not in ("score", "probability"):
            raise ValueError(f"unknown volume kind {self.kind!r}")
        if self.values.ndim != 3:
            raise ValueError("pose volume must be (H, W, K)")

    @property
    def shape(self):
        return self.values.shape

    @property
    def K(self) -> int:
        return self.values.shape[2]

    def pose_at(self, h, w, k) -> Pose:
        return Pose(self.origin.x + w * self.gsd, self.origin.y + h * self.gsd, theta_bins(self.K)[k])

    def pose_of_flat(self, flat: int) -> Pose:
        return self.pose_at(*np.unravel_index(flat, self.values.shape))

    def continuous_index(self, x, y, theta):
        """Fractional (h, w) and nearest heading bin for metric poses."""
        h = (np.asarray(y) - self.origin.y) / self.gsd
        w = (np.asarray(x) - self.origin.x) / self.gsd
        k = np.floor((wrap_angle(theta) + np.pi) / (2 * np.pi / self.K)).astype(np.int64) % self.K
        return h, w, k

    def cell_of(self, pose: Pose) -> tuple[int, int, int]:
        h, w, k = self.continuous_index(pose.x, pose.y, pose.theta)
        hi, wi = int(np.floor(h + 0.5)), int(np.floor(w + 0.5))
        H, W, _ = self.values.shape
        if not (0 <= hi < H and 0 <= wi < W):
            raise CoverageError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside the volume")
        return hi, wi, int(k)


@dataclass(frozen=True)
class MatchConfig:
    K: int = 256
    restrict: Optional[np.ndarray] = None  # (H, W, K) bool, True = candidate kept
    backend: str = "fft"
    dtype: str = "float64"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.restrict is not None and not np.any(self.restrict):
            raise ValueError("restriction mask selects no poses")
        if self.backend not in ("fft", "brute"):
            raise ValueError(f"unknown backend {self.backend!r}")


def restrict_mask(shape, gsd: float, origin: LocalPoint, prior: Pose, max_offset_m: float, max_angle_deg: float) -> np.ndarray:
    """Candidates within +-max_offset_m per axis and +-max_angle_deg of a prior pose."""
    H, W, K = shape
    xs = origin.x + np.arange(W) * gsd
    ys = origin.y + np.arange(H) * gsd
    keep_xy = (np.abs(ys - prior.y)[:, None] <= max_offset_m) & (np.abs(xs - prior.x)[None, :] <= max_offset_m)
    keep_k = angle_diff(theta_bins(K), prior.theta) <= math.radians(max_angle_deg)
    mask = keep_xy[:, :, None] & keep_k[None, None, :]
    if not mask.any():
        raise ValueError("restriction selects no poses")
    return mask


@lru_cache(maxsize=8)
def _rotation_operator(geom: TemplateGeometry, thetas: tuple):
    """Sparse bilinear resampling from template cells into rotated canvases.

    Returns ``(op, rows_per_k)``: ``op`` maps the flattened (D * L) template
    to the stacked in-support canvas cells of every heading, and
    ``rows_per_k[k]`` holds the flat canvas indices of heading ``k``'s rows.
    """
    D, L = geom.bins.D, geom.L
    R = geom.radius
    n = geom.canvas_size
    off = (np.arange(n) - R) * geom.map_gsd
    dy, dx = np.meshgrid(off, off, indexing="ij")
    dx, dy = dx.ravel(), dy.ravel()
    data, cols, rows = [], [], []
    rows_per_k = []
    base = 0
    for theta in thetas:
        c, s = math.cos(theta), math.sin(theta)
        f = dx * c + dy * s
        lat = dx * s - dy * c
        r = (f - geom.bins.d0) / geom.bins.delta - 1.0
        q = lat / geom.lateral_res + (L - 1) / 2
        eps = 1e-9
        inside = (r >= -eps) & (r <= D - 1 + eps) & (q >= -eps) & (q <= L - 1 + eps)
        idx = np.flatnonzero(inside)
        r, q = np.clip(r[idx], 0, D - 1), np.clip(q[idx], 0, L - 1)
        r0 = np.minimum(np.floor(r).astype(np.int64), D - 1)
        q0 = np.minimum(np.floor(q).astype(np.int64), L - 1)
        fr, fq = r - r0, q - q0
        local = np.arange(idx.size) + base
        for drow, wr in ((0, 1 - fr), (1, fr)):
            for dcol, wq in ((0, 1 - fq), (1, fq)):
                wgt = wr * wq
                rr, qq = r0 + drow, q0 + dcol
                ok = (wgt > 0) & (rr < D) & (qq < L)
                data.append(wgt[ok])
                cols.append((rr * L + qq)[ok])
                rows.append(local[ok])
        rows_per_k.append(idx)
        base += idx.size
    op = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(base, D * L)
    )
    return op, rows_per_k


def _geometry_for(bev: FeatureGrid, geom: TemplateGeometry) -> TemplateGeometry:
    bev.require(FrameTag.CARTESIAN_BEV)
    if bev.rows != geom.bins.D or bev.cols != geom.L:
        raise ValueError(f"template {bev.data.shape[:2]} does not match geometry ({geom.bins.D}, {geom.L})")
    return geom


def _rotated_canvases(template: np.ndarray, geom: TemplateGeometry, thetas) -> tuple[np.ndarray, np.ndarray]:
    """Rotated canvases (K, n, n, C) and validity masks (K, n, n)."""
    op, rows_per_k = _rotation_operator(geom, tuple(float(t) for t in thetas))
    n = geom.canvas_size
    C = template.shape[-1]
    vals = op @ template.reshape(-1, C)
    canv = np.zeros((len(rows_per_k), n * n, C), dtype=vals.dtype)
    mask = np.zeros((len(rows_per_k), n * n), dtype=bool)
    start = 0
    for k, idx in enumerate(rows_per_k):
        canv[k, idx] = vals[start : start + idx.size]
        mask[k, idx] = True
        start += idx.size
    return canv.reshape(len(rows_per_k), n, n, C), mask.reshape(len(rows_per_k), n, n)


def rotate_template(bev: FeatureGrid, theta: float, geom: TemplateGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Rotate a Cartesian BEV template about the camera onto the map-aligned canvas.

    Canvas cell ``(a, b)`` lies ``((b - R) * gsd, (a - R) * gsd)`` meters
    east/north of the camera, with ``R = geom.radius``. Heading ``theta = 0``
    faces east. Returns ``(canvas (n, n, C), mask (n, n))``.
    """
    _geometry_for(bev, geom)
    canv, mask = _rotated_canvases(bev.data, geom, [theta])
    return canv[0], mask[0]


def _check_inputs(F_map: FeatureGrid, bev: FeatureGrid, geom: TemplateGeometry):
    F_map.require(FrameTag.MAP_PLANE)
    _geometry_for(bev, geom)
    if F_map.channels != bev.channels:
        raise ValueError(f"channel mismatch: map {F_map.channels}, template {bev.channels}")


def score_poses_bruteforce(F_map: FeatureGrid, bev: FeatureGrid, cfg: MatchConfig, geom: TemplateGeometry, origin: LocalPoint = LocalPoint(0.0, 0.0)) -> PoseVolume:
    """Direct evaluation, one pose at a time: map window times rotated canvas."""
    _check_inputs(F_map, bev, geom)
    H, W, C = F_map.data.shape
    R = geom.radius
    padded = np.zeros((H + 2 * R, W + 2 * R, C))
    padded[R : R + H, R : R + W] = F_map.data
    canv, _ = _rotated_canvases(bev.data, geom, theta_bins(cfg.K))
    S = np.zeros((H, W, cfg.K))
    for k in range(cfg.K):
        used = np.any(canv[k] != 0, axis=-1)
        if not used.any():
            continue
        a = np.flatnonzero(used.any(axis=1))
        b = np.flatnonzero(used.any(axis=0))
        a0, a1, b0, b1 = a[0], a[-1] + 1, b[0], b[-1] + 1
        block = canv[k, a0:a1, b0:b1]
        for h in range(H):
            for w in range(W):
                window = padded[h + a0 : h + a1, w + b0 : w + b1]
                S[h, w, k] = np.tensordot(window, block, axes=3)
    S /= geom.bins.D * geom.L
    return PoseVolume(S, "score", geom.map_gsd, origin)


def _channel_basis(M: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis (C, r) of the channel space spanned by the map pixels."""
    flat = M.reshape(-1, M.shape[-1])
    gram = flat.T @ flat
    evals, evecs = np.linalg.eigh(gram)
    keep = evals > rtol * max(evals.max(), 0) if evals.max() > 0 else np.zeros_like(evals, dtype=bool)
    return evecs[:, keep]


def score_poses_fft(
    F_map: FeatureGrid,
    bev: FeatureGrid,
    cfg: MatchConfig,
    geom: TemplateGeometry,
    origin: LocalPoint = LocalPoint(0.0, 0.0),
    chunk: int = 4,
) -> PoseVolume:
    """Same scores as the brute-force backend via FFT cross-correlation.

    Channels are first projected onto the span of the map features, which
    leaves every inner product unchanged and shrinks the transform count.
    Each heading's canvas is zero-padded so the circular correlation equals
    the linear one over the map cells.
    """
    _check_inputs(F_map, bev, geom)
    H, W, _ = F_map.data.shape
    K = cfg.K
    R = geom.radius
    n = geom.canvas_size
    real = np.dtype(cfg.dtype)
    basis = _channel_basis(F_map.data.astype(np.float64))
    S = np.zeros((H, W, K))
    if basis.shape[1] == 0:
        return PoseVolume(S, "score", geom.map_gsd, origin)
    M = (F_map.data @ basis).astype(real)  # (H, W, r)
    T = bev.data @ basis  # (D, L, r)
    Nr = sfft.next_fast_len(max(H + R, n), real=True)
    Nc = sfft.next_fast_len(max(W + R, n), real=True)
    workers = fft_workers()
    # conj(FFT(map)) once; the per-heading product is conjugated back after the channel sum
    G = sfft.rfft2(np.moveaxis(M, -1, 0), s=(Nr, Nc), workers=workers).conj()
    thetas = theta_bins(K)
    op, rows_per_k = _rotation_operator(geom, tuple(float(t) for t in thetas))
    vals = (op @ T.reshape(-1, T.shape[-1])).astype(real)
    starts = np.concatenate([[0], np.cumsum([len(i) for i in rows_per_k])])
    r = T.shape[-1]
    for k0 in range(0, K, chunk):
        ks = range(k0, min(k0 + chunk, K))
        canv = np.zeros((len(ks), n * n, r), dtype=real)
        for j, k in enumerate(ks):
            canv[j, rows_per_k[k]] = vals[starts[k] : starts[k + 1]]
        canv = np.moveaxis(canv.reshape(len(ks), n, n, r), -1, 1)  # (k, r, n, n)
        # crop to the chunk's support; the crop offset shifts the output index
        used = np.any(canv != 0, axis=(0, 1))
        if not used.any():
            continue
        a = np.flatnonzero(used.any(axis=1))
        b = np.flatnonzero(used.any(axis=0))
        block = canv[:, :, a[0] : a[-1] + 1, b[0] : b[-1] + 1]
        FC = sfft.rfft(block, n=Nc, axis=-1, workers=workers)
        FC = sfft.fft(FC, n=Nr, axis=-2, workers=workers)
        prod = np.einsum("crs,kcrs->krs", G, FC).conj()
        corr = sfft.irfft2(prod, s=(Nr, Nc), workers=workers)
        rows = (np.arange(H) + a[0] - R) % Nr
        cols = (np.arange(W) + b[0] - R) % Nc
        S[:, :, k0 : k0 + len(ks)] = np.moveaxis(corr[:, rows][:, :, cols], 0, -1)
    S /= geom.bins.D * geom.L
    return PoseVolume(S, "score", geom.map_gsd, origin)


def score_poses(F_map: FeatureGrid, bev: FeatureGrid, cfg: MatchConfig, geom: TemplateGeometry, origin: LocalPoint = LocalPoint(0.0, 0.0)) -> PoseVolume:
    if cfg.backend == "brute":
        return score_poses_bruteforce(F_map, bev, cfg, geom, origin)
    return score_poses_fft(F_map, bev, cfg, geom, origin)


def valid_cell_normalized(S: PoseVolume, bev: FeatureGrid) -> PoseVolume:
    """Diagnostic rescaling by the number of nonzero template cells instead of D * L."""
    n_valid = int(np.count_nonzero(np.any(bev.data != 0, axis=-1)))
    scale = bev.rows * bev.cols / max(n_valid, 1)
    return PoseVolume(S.values * scale, "score", S.gsd, S.origin)


def softmax_volume(S: PoseVolume, restrict: Optional[np.ndarray] = None) -> PoseVolume:
    vals = np.asarray(S.values, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("scores must be finite")
    if restrict is not None:
        if restrict.shape != vals.shape:
            raise ValueError(f"restriction shape {restrict.shape} differs from volume {vals.shape}")
        if not restrict.any():
            raise ValueError("restriction selects no poses")
        vals = np.where(restrict, vals, -np.inf)
    e = np.exp(vals - vals.max())
    return PoseVolume(e / e.sum(), "probability", S.gsd, S.origin)


def argmax_pose(P: PoseVolume) -> tuple[Pose, int]:
    """Most probable pose; ties resolve to the smallest row-major (h, w, k) index."""
    flat = int(np.argmax(P.values))
    return P.pose_of_flat(flat), flat


def top_indices(flat: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values, descending, ties by ascending index."""
    if k >= flat.size:
        return np.argsort(-flat, kind="stable")
    part = np.argpartition(-flat, k - 1)[:k]
    thr = flat[part].min()
    above = np.flatnonzero(flat > thr)
    tied = np.flatnonzero(flat == thr)[: k - above.size]
    sel = np.concatenate([above, tied])
    return sel[np.lexsort((sel, -flat[sel]))]


def topk_poses(P: PoseVolume, k: int) -> list[tuple[Pose, int, float]]:
    size = P.values.size
    if k < 1 or k > size:
        raise ValueError(f"k={k} outside [1, {size}]")
    flat = P.values.ravel()
    order = top_indices(flat, k)
    return [(P.pose_of_flat(int(i)), int(i), float(flat[i])) for i in order]


def pose_nll_loss(P: PoseVolume, gt: Pose) -> float:
    """Negative log probability of the cell nearest the ground-truth pose."""
    if P.kind != "probability":
        raise ValueError("pose loss needs a probability volume")
    h, w, k = P.cell_of(gt)
    p = P.values[h, w, k]
    return float(-np.log(p)) if p > 0 else math.inf


def semantic_alignment_loss(
    F_bev: FeatureGrid,
    M_sem: FeatureGrid,
    map_origin: LocalPoint,
    map_gsd: float,
    gt: Pose,
    adapter: ChannelAdapter,
    bins: DepthBins,
    lateral_res: float = 0.5,
) -> float:
    """Mean L2 distance between adapted BEV cells and the map embedding under the GT pose."""
    F_bev.require(FrameTag.CARTESIAN_BEV)
    M_sem.require(FrameTag.MAP_PLANE)
    if F_bev.rows != bins.D:
        raise ValueError(f"template has {F_bev.rows} rows, bins give {bins.D}")
    H, W, _ = M_sem.data.shape
    gx, gy = (gt.x - map_origin.x) / map_gsd, (gt.y - map_origin.y) / map_gsd
    if not (-0.5 <= gx < W - 0.5 and -0.5 <= gy < H - 0.5):
        raise CoverageError("ground-truth pose outside the map")
    forward, lateral = bev_cell_offsets(bins, F_bev.cols, lateral_res)
    fx, fy = gt.forward()
    rx, ry = gt.right()
    x = gt.x + forward[:, None] * fx + lateral[None, :] * rx
    y = gt.y + forward[:, None] * fy + lateral[None, :] * ry
    target = sample_bilinear(M_sem.data, (y - map_origin.y) / map_gsd, (x - map_origin.x) / map_gsd)
    pred = adapter(F_bev.data)
    if pred.shape != target.shape:
        raise ValueError(f"adapted template {pred.shape} does not match map embedding {target.shape}")
    return float(np.linalg.norm(pred - target, axis=-1).mean())


def joint_loss(l_pose: float, l_dis: float, l_sem: float, lambdas=(1.0, 20.0, 10.0)) -> float:
    l1, l2, l3 = lambdas
    return l1 * l_pose + l2 * l_dis + l3 * l_sem
