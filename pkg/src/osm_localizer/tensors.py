"""Frame-tagged feature grids, the OSMF tensor container and a bilinear sampler."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

OSMF_MAGIC = b"OSMF"
OSMF_VERSION = 1
_OSMF_HEADER = struct.Struct("<4sHBB3I")


class FrameTag(enum.IntEnum):
    IMAGE_PLANE = 0
    POLAR_BEV = 1
    CARTESIAN_BEV = 2
    MAP_PLANE = 3
    # tags below carry non-feature payloads in the same container
    DEPTH_DISTRIBUTION = 4
    DISPARITY = 5
    POSE_SCORE = 6
    POSE_PROBABILITY = 7


class FrameTagError(ValueError):
    pass


class TensorFormatError(ValueError):
    pass


class TensorDataError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureGrid:
    data: np.ndarray  # (rows, cols, channels)
    frame_tag: FrameTag

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"feature grid must be rank 3, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise TensorDataError("feature grid contains NaN or Inf")
        object.__setattr__(self, "frame_tag", FrameTag(self.frame_tag))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def require(self, *tags: FrameTag) -> "FeatureGrid":
        if self.frame_tag not in tags:
            names = ", ".join(t.name for t in tags)
            raise FrameTagError(f"expected frame tag {names}, got {self.frame_tag.name}")
        return self


def encode_osmf(data: np.ndarray, frame_tag: FrameTag) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise ValueError("OSMF stores rank-3 tensors only")
    header = _OSMF_HEADER.pack(OSMF_MAGIC, OSMF_VERSION, int(frame_tag), 3, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_osmf(blob: bytes) -> tuple[np.ndarray, FrameTag]:
    if len(blob) < _OSMF_HEADER.size:
        raise TensorFormatError("truncated OSMF header")
    magic, version, tag, rank, d0, d1, d2 = _OSMF_HEADER.unpack_from(blob)
    if magic != OSMF_MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != OSMF_VERSION:
        raise TensorFormatError(f"unsupported OSMF version {version}")
    if rank != 3:
        raise TensorFormatError(f"unsupported rank {rank}")
    try:
        tag = FrameTag(tag)
    except ValueError:
        raise TensorFormatError(f"unknown frame tag {tag}") from None
    payload = blob[_OSMF_HEADER.size :]
    if len(payload) != 4 * d0 * d1 * d2:
        raise TensorFormatError(f"payload is {len(payload)} bytes, dims {d0}x{d1}x{d2} need {4 * d0 * d1 * d2}")
    data = np.frombuffer(payload, dtype="<f4").reshape(d0, d1, d2).astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise TensorDataError("OSMF payload contains NaN or Inf")
    return data, tag


def save_feature_tensor(grid: FeatureGrid, path) -> None:
    Path(path).write_bytes(encode_osmf(grid.data, grid.frame_tag))


def load_feature_tensor(path) -> FeatureGrid:
    data, tag = decode_osmf(Path(path).read_bytes())
    return FeatureGrid(data, tag)


def sample_bilinear(grid: np.ndarray, rows, cols) -> np.ndarray:
    """Bilinearly sample ``grid[rows, cols]`` at fractional indices.

    Neighbours outside the grid contribute zero, so samples fade out over the
    last half-cell beyond the border and are exactly zero one cell past it.
    Returns an array of shape ``rows.shape + grid.shape[2:]``.
    """
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    h, w = grid.shape[:2]
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros(rows.shape + grid.shape[2:], dtype=np.result_type(grid.dtype, np.float64))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            wgt = np.where(ok, wr * wc, 0.0)
            vals = grid[np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1)]
            out += vals * wgt.reshape(wgt.shape + (1,) * (grid.ndim - 2))
    return out
