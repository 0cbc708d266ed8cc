"""Localization metrics: recalls at (meters, degrees) thresholds, mean errors,
lateral/longitudinal decomposition and top-k recall curves.

All comparisons against thresholds are strict (``error < sigma``).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .poses import Pose, angle_diff

DEFAULT_THRESHOLDS = ((1.0, 1.0), (3.0, 3.0), (5.0, 5.0))

RECORD_COLUMNS = ("frame", "pred_x", "pred_y", "pred_theta", "gt_x", "gt_y", "gt_theta")
TOPK_COLUMNS = ("frame", "rank", "x", "y", "theta")


class EmptyRecordsError(ValueError):
    pass


class RecordFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    frame: str
    pred: Pose
    gt: Pose
    topk: Optional[tuple] = None  # candidate Poses, best first


@dataclass(frozen=True)
class Thresholds:
    pairs: tuple = DEFAULT_THRESHOLDS  # (sigma_p meters, sigma_o degrees)

    def __post_init__(self):
        pairs = tuple((float(p), float(o)) for p, o in self.pairs)
        if not pairs:
            raise ValueError("need at least one threshold pair")
        for p, o in pairs:
            if p <= 0 or o <= 0:
                raise ValueError(f"thresholds must be positive, got ({p}, {o})")
        for (p0, o0), (p1, o1) in zip(pairs, pairs[1:]):
            if p1 <= p0 or o1 <= o0:
                raise ValueError("threshold pairs must be strictly increasing")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def parse(cls, text: str) -> "Thresholds":
        """``"1,3,5"`` (same value for meters and degrees) or ``"1:2,3:5"``."""
        pairs = []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            p, _, o = item.partition(":")
            pairs.append((float(p), float(o or p)))
        return cls(tuple(pairs))


def _require(records: Sequence[EvalRecord]):
    if len(records) == 0:
        raise EmptyRecordsError("no records to evaluate")


def position_errors(records: Sequence[EvalRecord]) -> np.ndarray:
    _require(records)
    return np.array([math.hypot(r.pred.x - r.gt.x, r.pred.y - r.gt.y) for r in records])


def orientation_errors_deg(records: Sequence[EvalRecord]) -> np.ndarray:
    _require(records)
    return np.degrees(angle_diff([r.pred.theta for r in records], [r.gt.theta for r in records]))


def _orientation_ok(errors_rad, sigma_o_deg: float) -> np.ndarray:
    return np.asarray(errors_rad) < math.radians(sigma_o_deg)


def position_recall(records: Sequence[EvalRecord], sigma_p: float) -> float:
    return float(np.mean(position_errors(records) < sigma_p))


def orientation_recall(records: Sequence[EvalRecord], sigma_o: float) -> float:
    _require(records)
    err = angle_diff([r.pred.theta for r in records], [r.gt.theta for r in records])
    return float(np.mean(_orientation_ok(err, sigma_o)))


def ape_aoe(records: Sequence[EvalRecord]) -> tuple[float, float]:
    """Mean position error (m) and mean absolute orientation error (deg)."""
    return float(np.mean(position_errors(records))), float(np.mean(orientation_errors_deg(records)))


def lateral_longitudinal_errors(records: Sequence[EvalRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Absolute error components perpendicular to and along each ground-truth heading."""
    _require(records)
    d = np.array([(r.pred.x - r.gt.x, r.pred.y - r.gt.y) for r in records])
    th = np.array([r.gt.theta for r in records])
    c, s = np.cos(th), np.sin(th)
    lon = d[:, 0] * c + d[:, 1] * s
    lat = -d[:, 0] * s + d[:, 1] * c
    return np.abs(lat), np.abs(lon)


@dataclass(frozen=True)
class LatLonResult:
    lat_recall: dict  # sigma_p -> fraction
    lon_recall: dict
    alat: float
    alon: float


def lat_lon_decompose(records: Sequence[EvalRecord], sigmas: Sequence[float]) -> LatLonResult:
    lat, lon = lateral_longitudinal_errors(records)
    return LatLonResult(
        {float(s): float(np.mean(lat < s)) for s in sigmas},
        {float(s): float(np.mean(lon < s)) for s in sigmas},
        float(np.mean(lat)),
        float(np.mean(lon)),
    )


def recall_curve_topk(
    records: Sequence[EvalRecord], sigma_p: float, sigma_o: float, k_max: int, mode: str = "joint"
) -> np.ndarray:
    """Fraction of records with a successful candidate among their first k, for k = 1..k_max.

    ``mode`` is "joint" (position and orientation both within threshold),
    "position" or "orientation".
    """
    _require(records)
    if mode not in ("joint", "position", "orientation"):
        raise ValueError(f"unknown mode {mode!r}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    hits = np.zeros((len(records), k_max), dtype=bool)
    for i, r in enumerate(records):
        cands = r.topk or ()
        if len(cands) < k_max:
            raise ValueError(f"record {r.frame} has {len(cands)} candidates, need {k_max}")
        c = np.array([p.as_tuple() for p in cands[:k_max]])
        pos_ok = np.hypot(c[:, 0] - r.gt.x, c[:, 1] - r.gt.y) < sigma_p
        ori_ok = _orientation_ok(angle_diff(c[:, 2], r.gt.theta), sigma_o)
        ok = {"joint": pos_ok & ori_ok, "position": pos_ok, "orientation": ori_ok}[mode]
        hits[i] = np.logical_or.accumulate(ok)
    return hits.mean(axis=0)


def evaluate(records: Sequence[EvalRecord], thresholds: Thresholds = Thresholds(), k_max: Optional[int] = None) -> dict:
    """All scalar metrics at every threshold, plus joint top-k curves when ``k_max`` is given."""
    ape, aoe = ape_aoe(records)
    sig_p = [p for p, _ in thresholds.pairs]
    ll = lat_lon_decompose(records, sig_p)
    report = {
        "n_records": len(records),
        "ape_m": ape,
        "aoe_deg": aoe,
        "alat_m": ll.alat,
        "alon_m": ll.alon,
        "thresholds": [],
    }
    for p, o in thresholds.pairs:
        entry = {
            "sigma_p_m": p,
            "sigma_o_deg": o,
            "position_recall": position_recall(records, p),
            "orientation_recall": orientation_recall(records, o),
            "lateral_recall": ll.lat_recall[p],
            "longitudinal_recall": ll.lon_recall[p],
        }
        if k_max:
            entry["topk_joint_recall"] = recall_curve_topk(records, p, o, k_max).tolist()
        report["thresholds"].append(entry)
    return report


def _float(row, key, where):
    try:
        v = float(row[key])
    except (KeyError, TypeError, ValueError):
        raise RecordFormatError(f"{where}: bad or missing column {key!r}") from None
    if not math.isfinite(v):
        raise RecordFormatError(f"{where}: non-finite {key}")
    return v


def read_records_csv(path, topk_path=None) -> list[EvalRecord]:
    """Records CSV with columns ``frame,pred_x,pred_y,pred_theta,gt_x,gt_y,gt_theta`` (radians).

    The optional sidecar lists candidates as ``frame,rank,x,y,theta`` with rank from 1.
    """
    cands: dict = {}
    if topk_path is not None:
        with open(topk_path, newline="") as f:
            for n, row in enumerate(csv.DictReader(f), start=2):
                where = f"{topk_path}:{n}"
                rank = int(_float(row, "rank", where))
                cands.setdefault(row["frame"], []).append(
                    (rank, Pose(_float(row, "x", where), _float(row, "y", where), _float(row, "theta", where)))
                )
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(RECORD_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise RecordFormatError(f"{path}: missing columns {sorted(missing)}")
        for n, row in enumerate(reader, start=2):
            where = f"{path}:{n}"
            pred = Pose(_float(row, "pred_x", where), _float(row, "pred_y", where), _float(row, "pred_theta", where))
            gt = Pose(_float(row, "gt_x", where), _float(row, "gt_y", where), _float(row, "gt_theta", where))
            top = cands.get(row["frame"])
            topk = tuple(p for _, p in sorted(top, key=lambda t: t[0])) if top else None
            records.append(EvalRecord(row["frame"], pred, gt, topk))
    return records


def write_records_csv(records: Sequence[EvalRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.frame, *(repr(v) for v in r.pred.as_tuple()), *(repr(v) for v in r.gt.as_tuple())])


def write_report_json(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_report_csv(report: dict, path) -> None:
    """Long format: one ``metric,sigma_p_m,sigma_o_deg,value`` row per number."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["metric", "sigma_p_m", "sigma_o_deg", "value"])
        for key in ("n_records", "ape_m", "aoe_deg", "alat_m", "alon_m"):
            w.writerow([key, "", "", repr(report[key])])
        for t in report["thresholds"]:
            for key, val in t.items():
                if key in ("sigma_p_m", "sigma_o_deg"):
                    continue
                if isinstance(val, list):
                    for k, v in enumerate(val, start=1):
                        w.writerow([f"{key}@{k}", t["sigma_p_m"], t["sigma_o_deg"], repr(v)])
                else:
                    w.writerow([key, t["sigma_p_m"], t["sigma_o_deg"], repr(val)])
