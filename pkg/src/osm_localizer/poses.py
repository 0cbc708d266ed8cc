"""Planar 3-DoF poses in the local East-North frame.

Heading ``theta`` is measured counter-clockwise from the +x (east) axis,
so ``theta = pi/2`` faces north.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]. Works on scalars and arrays."""
    t = np.asarray(theta, dtype=float)
    # in-range angles pass through untouched so they stay bit-exact
    wrapped = np.where((t > -np.pi) & (t <= np.pi), t, np.pi - np.mod(np.pi - t, 2 * np.pi))
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def angle_diff(a, b):
    """Absolute angular difference folded into [0, pi]."""
    # exact when no wrap is needed, so boundary-equal errors stay boundary-equal
    d = np.remainder(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 2 * np.pi)
    d = np.minimum(d, 2 * np.pi - d)
    if np.ndim(d) == 0:
        return float(d)
    return d


@dataclass(frozen=True)
class LocalPoint:
    x: float
    y: float


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> LocalPoint:
        return LocalPoint(self.x, self.y)

    def forward(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)

    def right(self) -> tuple[float, float]:
        return math.sin(self.theta), -math.cos(self.theta)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.x, self.y, self.theta
