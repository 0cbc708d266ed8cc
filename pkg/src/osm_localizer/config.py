"""Run configuration: every tunable in one place, stored as ``key = value`` lines.

Values are Python literals (numbers, strings, tuples). Unknown keys and
ill-typed values are rejected, and a written config reads back identically.
"""
from __future__ import annotations

import ast
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

# ids of the named random sub-streams derived from the master seed
_STREAMS = {"prior": 11, "embeddings": 12, "particles": 13, "synthetic": 14}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # map
    gsd: float = 0.5
    tile_m: float = 128.0
    prior_radius_m: float = 32.0
    # BEV
    D: int = 64
    L: int = 129
    d0: float = 0.0
    delta: float = 0.5
    # synthetic camera: 150 degree horizontal field of view over 512 columns
    fx: float = 68.59499326236741
    cx: float = 256.0
    image_cols: int = 512
    image_rows: int = 64
    # features and matching
    c_sem: int = 16
    k_infer: int = 256
    backend: str = "fft"
    dtype: str = "float64"
    restrict_m: float = 20.0
    restrict_deg: float = 10.0
    lambdas: tuple = (1.0, 20.0, 10.0)
    # evaluation
    thresholds: tuple = ((1.0, 1.0), (3.0, 3.0), (5.0, 5.0))
    # tracking
    varsigma: float = 2.0
    n_particles: int = 1000
    n_particles_min: int = 200
    neff_ratio: float = 0.5
    conv_pos_std_m: float = 2.0
    conv_theta_std_deg: float = 10.0
    conv_frames: int = 2
    min_len: int = 3
    max_len: int = 10
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            want = type(f.default)
            if want is float and isinstance(v, int) and not isinstance(v, bool):
                object.__setattr__(self, f.name, float(v))
            elif want is tuple and isinstance(v, list):
                object.__setattr__(self, f.name, _as_tuple(v))
            elif not isinstance(v, want) or isinstance(v, bool):
                raise ConfigError(f"{f.name} must be {want.__name__}, got {v!r}")
        positive = ("gsd", "tile_m", "prior_radius_m", "D", "L", "delta", "fx", "image_cols", "image_rows",
                    "c_sem", "k_infer", "restrict_m", "restrict_deg", "varsigma", "n_particles", "n_particles_min",
                    "neff_ratio", "conv_pos_std_m", "conv_theta_std_deg", "conv_frames", "min_len", "max_len")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.d0 < 0 or self.seed < 0:
            raise ConfigError("d0 and seed must be nonnegative")
        if self.L % 2 == 0:
            raise ConfigError("L must be odd")
        if self.backend not in ("fft", "brute"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")
        if len(self.lambdas) != 3:
            raise ConfigError("lambdas needs three weights")
        if self.n_particles_min > self.n_particles or self.min_len > self.max_len:
            raise ConfigError("minimums exceed maximums")

    def with_overrides(self, **kw) -> "RunConfig":
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return replace(self, **kw)

    def substream_seed(self, name: str) -> int:
        """Integer seed of a named sub-stream of the master seed."""
        seq = np.random.SeedSequence([self.seed, _STREAMS[name]])
        return int(seq.generate_state(1, dtype=np.uint32)[0])


def _as_tuple(v):
    return tuple(_as_tuple(x) if isinstance(x, (list, tuple)) else x for x in v)


def dumps(cfg: RunConfig) -> str:
    lines = [f"{k} = {v!r}" for k, v in asdict(cfg).items()]
    return "\n".join(lines) + "\n"


def loads(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key = value")
        try:
            values[key.strip()] = ast.literal_eval(val.strip())
        except (ValueError, SyntaxError):
            raise ConfigError(f"line {n}: cannot parse value {val.strip()!r}") from None
    return base.with_overrides(**values)


def load_config(path=None) -> RunConfig:
    """Read a config file; without a path, the packaged defaults."""
    if path is None:
        text = resources.files("osm_localizer.data").joinpath("paper_defaults.cfg").read_text()
    else:
        text = Path(path).read_text()
    return loads(text)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
