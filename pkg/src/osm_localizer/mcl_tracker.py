"""Monte Carlo localization over a sequence of pose score volumes.

Particles are stored column-wise (x, y, theta, weight arrays). Observation
weights follow ``w ∝ w_prev * S ** (1 / (2 varsigma^2))`` with S sampled
bilinearly in (h, w) and at the nearest heading bin, floored at 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .pose_matcher import PoseVolume, softmax_volume, top_indices, theta_bins
from .poses import Pose, wrap_angle

SCORE_FLOOR = 1e-12

# named sub-streams of the master seed
STREAM_MOTION = 1
STREAM_RESAMPLE = 2


class TrackerConfigError(ValueError):
    pass


def stream_rng(seed, *keys: int) -> np.random.Generator:
    """Generator for sub-stream ``keys`` of ``seed``; passes Generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class Particle:
    pose: Pose
    weight: float


@dataclass
class ParticleSet:
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        n = self.x.shape[0]
        if not (self.y.shape == self.theta.shape == self.weights.shape == (n,)):
            raise ValueError("particle arrays must share one length")
        if n == 0:
            raise ValueError("empty particle set")
        if not np.all(np.isfinite(self.weights)) or (self.weights < 0).any():
            raise ValueError("particle weights must be finite and nonnegative")
        self.theta = wrap_angle(self.theta)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def particles(self) -> list[Particle]:
        return [Particle(Pose(*p[:3]), p[3]) for p in zip(self.x, self.y, self.theta, self.weights)]

    @classmethod
    def from_particles(cls, particles: list[Particle], normalize: bool = True) -> "ParticleSet":
        arr = np.array([(p.pose.x, p.pose.y, p.pose.theta, p.weight) for p in particles], dtype=float)
        ps = cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], normalized=False)
        return ps.normalize() if normalize else ps

    def normalize(self) -> "ParticleSet":
        total = self.weights.sum()
        if not total > 0:
            raise ValueError("all particle weights are zero")
        return ParticleSet(self.x, self.y, self.theta, self.weights / total, True)


@dataclass(frozen=True)
class MotionInput:
    """Odometry as rot1 / trans / rot2 with Gaussian noise per component."""

    rot1: float
    trans: float
    rot2: float
    std_rot1: float = 0.0
    std_trans: float = 0.0
    std_rot2: float = 0.0

    def __post_init__(self):
        if min(self.std_rot1, self.std_trans, self.std_rot2) < 0:
            raise ValueError("noise std devs must be >= 0")

    @classmethod
    def from_delta(cls, dx: float, dy: float, dtheta: float, std_rot1=0.0, std_trans=0.0, std_rot2=0.0) -> "MotionInput":
        """From a displacement (dx forward, dy left) and heading change in the previous pose frame."""
        trans = math.hypot(dx, dy)
        rot1 = math.atan2(dy, dx) if trans > 1e-12 else 0.0
        return cls(rot1, trans, float(wrap_angle(dtheta - rot1)), std_rot1, std_trans, std_rot2)

    @classmethod
    def from_odometry(cls, dx: float, dy: float, dtheta: float, sigma_xy: float = 0.0, sigma_theta: float = 0.0) -> "MotionInput":
        """Map per-axis position noise and heading noise onto the rot1/trans/rot2 components.

        Lateral noise ``sigma_xy`` over a step of length ``trans`` is a bearing
        error of about ``sigma_xy / trans``; the final rotation absorbs both
        that bearing error and the heading noise.
        """
        trans = math.hypot(dx, dy)
        s_rot1 = min(sigma_xy / max(trans, sigma_xy), math.pi) if sigma_xy > 0 else 0.0
        return cls.from_delta(dx, dy, dtheta, s_rot1, sigma_xy, math.hypot(sigma_theta, s_rot1))

    @property
    def noiseless(self) -> bool:
        return self.std_rot1 == self.std_trans == self.std_rot2 == 0.0


@dataclass(frozen=True)
class ObservationParams:
    varsigma: float = 2.0

    def __post_init__(self):
        if not self.varsigma > 0:
            raise ValueError("varsigma must be > 0")

    @property
    def exponent(self) -> float:
        return 1.0 / (2.0 * self.varsigma**2)


def init_particles(P: PoseVolume, n_particles: int, rng_seed=None) -> ParticleSet:
    """Particles on the top-``n_particles`` cells of ``P`` with uniform weights.

    Placement is deterministic; ``rng_seed`` is accepted for interface symmetry.
    """
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if P.values.size < n_particles:
        raise ValueError(f"volume has {P.values.size} cells, fewer than {n_particles} particles")
    flat = top_indices(P.values.ravel(), n_particles)
    h, w, k = np.unravel_index(flat, P.values.shape)
    x = P.origin.x + w * P.gsd
    y = P.origin.y + h * P.gsd
    th = theta_bins(P.K)[k]
    return ParticleSet(x.astype(float), y.astype(float), th, np.full(n_particles, 1.0 / n_particles))


def predict(ps: ParticleSet, u: MotionInput, rng_seed=0, frame: int = 0) -> ParticleSet:
    n = len(ps)
    if u.noiseless:
        r1 = np.full(n, u.rot1)
        tr = np.full(n, u.trans)
        r2 = np.full(n, u.rot2)
    else:
        rng = stream_rng(rng_seed, STREAM_MOTION, frame)
        eps = rng.standard_normal((n, 3))
        r1 = u.rot1 + u.std_rot1 * eps[:, 0]
        tr = u.trans + u.std_trans * eps[:, 1]
        r2 = u.rot2 + u.std_rot2 * eps[:, 2]
    heading = ps.theta + r1
    x = ps.x + tr * np.cos(heading)
    y = ps.y + tr * np.sin(heading)
    return ParticleSet(x, y, heading + r2, ps.weights.copy(), ps.normalized)


def sample_scores(S: PoseVolume, x, y, theta, floor: float = SCORE_FLOOR) -> np.ndarray:
    """Bilinear in (h, w), nearest heading bin; cells outside the volume get ``floor``."""
    h, w, k = S.continuous_index(x, y, theta)
    H, W, _ = S.shape
    h0 = np.floor(h).astype(np.int64)
    w0 = np.floor(w).astype(np.int64)
    fh, fw = h - h0, w - w0
    inside = (h >= 0) & (h <= H - 1) & (w >= 0) & (w <= W - 1)
    out = np.zeros(np.shape(h))
    for dh, wh in ((0, 1 - fh), (1, fh)):
        for dw, ww in ((0, 1 - fw), (1, fw)):
            hh = np.clip(h0 + dh, 0, H - 1)
            cc = np.clip(w0 + dw, 0, W - 1)
            out += wh * ww * S.values[hh, cc, k]
    out = np.where(inside, out, floor)
    return np.maximum(out, floor)


def update_weights(ps: ParticleSet, S: PoseVolume, obs: ObservationParams = ObservationParams()) -> ParticleSet:
    if S.kind != "score":
        raise ValueError("update_weights expects a score volume")
    if not np.all(np.isfinite(S.values)):
        raise ValueError("score volume contains NaN or Inf")
    s = sample_scores(S, ps.x, ps.y, ps.theta)
    with np.errstate(divide="ignore"):
        logw = np.log(ps.weights) + obs.exponent * np.log(s)
    logw -= logw[np.isfinite(logw)].max()
    w = np.exp(logw)
    return ParticleSet(ps.x, ps.y, ps.theta, w / w.sum(), True)


def effective_sample_size(ps: ParticleSet) -> float:
    w = ps.weights / ps.weights.sum()
    return float(1.0 / np.sum(w * w))


def systematic_indices(weights: np.ndarray, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: one uniform offset, ``n_out`` evenly spaced pointers."""
    c = np.cumsum(weights / weights.sum())
    c[-1] = 1.0
    pointers = (rng.uniform() + np.arange(n_out)) / n_out
    return np.searchsorted(c, pointers, side="right")


def resample_if_needed(
    ps: ParticleSet, rng_seed=0, frame: int = 0, target_size: Optional[int] = None, threshold: float = 0.5
) -> ParticleSet:
    """Systematic resampling when N_eff < threshold * N, or whenever the size must change.

    Resampled sets carry uniform weights.
    """
    if not ps.normalized:
        raise ValueError("resampling needs normalized weights")
    n = len(ps)
    n_out = n if target_size is None else target_size
    if n_out == n and effective_sample_size(ps) >= threshold * n:
        return ps
    idx = systematic_indices(ps.weights, n_out, stream_rng(rng_seed, STREAM_RESAMPLE, frame))
    return ParticleSet(ps.x[idx], ps.y[idx], ps.theta[idx], np.full(n_out, 1.0 / n_out), True)


def estimate_pose(ps: ParticleSet) -> Pose:
    """Weighted mean position and weighted circular mean heading."""
    total = ps.weights.sum()
    if not total > 0:
        raise ValueError("all particle weights are zero")
    w = ps.weights / total
    return Pose(float(w @ ps.x), float(w @ ps.y), math.atan2(w @ np.sin(ps.theta), w @ np.cos(ps.theta)))


def spread(ps: ParticleSet) -> tuple[float, float]:
    """Weighted per-axis position std (m, root mean of the x and y variances) and circular std (rad)."""
    w = ps.weights / ps.weights.sum()
    mx, my = w @ ps.x, w @ ps.y
    pos = math.sqrt(max(w @ ((ps.x - mx) ** 2 + (ps.y - my) ** 2) / 2.0, 0.0))
    R = math.hypot(w @ np.cos(ps.theta), w @ np.sin(ps.theta))
    circ = math.sqrt(-2.0 * math.log(min(max(R, 1e-300), 1.0)))
    return pos, circ


@dataclass(frozen=True)
class TrackerConfig:
    n_init: int = 1000
    n_min: int = 200
    obs: ObservationParams = field(default_factory=ObservationParams)
    neff_ratio: float = 0.5
    conv_pos_std_m: float = 2.0
    conv_theta_std_deg: float = 10.0
    conv_frames: int = 2
    min_len: int = 3
    max_len: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_init:
            raise ValueError("need 1 <= n_min <= n_init")
        if not 0 < self.neff_ratio <= 1:
            raise ValueError("neff_ratio must be in (0, 1]")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")


@dataclass(frozen=True)
class FrameEstimate:
    frame: int
    pose: Pose
    n_eff: float
    n_particles: int
    converged: bool
    resampled: bool


def track_sequence(frames: Iterable[tuple[PoseVolume, Optional[MotionInput]]], cfg: TrackerConfig = TrackerConfig()) -> list[FrameEstimate]:
    """Filter a sequence of (score volume, motion since previous frame) pairs.

    The motion of the first frame is ignored. Frame 0 initialises particles on
    the top cells of the softmax of its score volume, then every frame runs
    predict, update, estimate and resample. Once the particle spread stays
    under the convergence thresholds for ``conv_frames`` consecutive frames
    the set is resampled down to ``n_min`` particles.
    """
    frames = list(frames)
    if not cfg.min_len <= len(frames) <= cfg.max_len:
        raise TrackerConfigError(
            f"sequence has {len(frames)} frames; allowed lengths are {cfg.min_len}..{cfg.max_len}"
        )
    out = []
    ps = None
    streak = 0
    reduced = False
    for t, (S, u) in enumerate(frames):
        if t == 0:
            ps = init_particles(softmax_volume(S), cfg.n_init)
        else:
            if u is None:
                raise TrackerConfigError(f"frame {t} has no motion input")
            ps = predict(ps, u, cfg.seed, frame=t)
        ps = update_weights(ps, S, cfg.obs)
        pose = estimate_pose(ps)
        n_eff = effective_sample_size(ps)
        pos_std, th_std = spread(ps)
        converged = pos_std < cfg.conv_pos_std_m and th_std < math.radians(cfg.conv_theta_std_deg)
        streak = streak + 1 if converged else 0
        target = None
        if not reduced and streak >= cfg.conv_frames and len(ps) > cfg.n_min:
            target, reduced = cfg.n_min, True
        before = ps
        ps = resample_if_needed(ps, cfg.seed, frame=t, target_size=target, threshold=cfg.neff_ratio)
        out.append(FrameEstimate(t, pose, n_eff, len(before), streak >= cfg.conv_frames, ps is not before))
    return out
