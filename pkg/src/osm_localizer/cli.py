"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bev_transform import CameraIntrinsics, DepthBins, DepthDistribution, SimplexError
from .config import ConfigError, RunConfig, load_config
from .eval_harness import (
    EmptyRecordsError,
    EvalRecord,
    RecordFormatError,
    Thresholds,
    evaluate,
    read_records_csv,
    write_records_csv,
    write_report_csv,
    write_report_json,
)
from .feature_model import build_embedding_table, embed_map, synth_image_features
from .mcl_tracker import MotionInput, ObservationParams, TrackerConfig, TrackerConfigError, track_sequence
from .osm_ingest import GeoPoint, LocalFrame, OsmParseError, build_geometry, parse_osm_xml, project_to_local
from .pipeline import cell_distance, degrees_pose, localize
from .pose_matcher import (
    MatchConfig,
    PoseVolume,
    TemplateGeometry,
    score_poses_bruteforce,
    score_poses_fft,
    theta_bins,
    topk_poses,
)
from .poses import LocalPoint, Pose
from .rasterizer import CoverageError, MapTile, RasterFormatError, crop_tile, load_raster, rasterize, save_raster
from .render import save_heatmap_png, save_raster_png
from .synthetic import DEFAULT_ORIGIN, generate_neighborhood_osm, synthetic_sequence
from .taxonomy import TaxonomyError, load_taxonomy
from .tensors import FeatureGrid, FrameTag, FrameTagError, TensorDataError, TensorFormatError, load_feature_tensor, save_feature_tensor

MANIFEST_VERSION = 1


class UsageError(ValueError):
    pass


class ManifestError(ValueError):
    pass


INPUT_ERRORS = (
    UsageError,
    ManifestError,
    ConfigError,
    TrackerConfigError,
    OsmParseError,
    RasterFormatError,
    TensorFormatError,
    TensorDataError,
    FrameTagError,
    TaxonomyError,
    CoverageError,
    RecordFormatError,
    EmptyRecordsError,
    SimplexError,
)


# argument helpers -----------------------------------------------------------


def _floats(text: str, n=None, name="value") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _ints(text: str, name="value") -> list[int]:
    vals = _floats(text, name=name)
    if any(v != int(v) for v in vals):
        raise UsageError(f"{name}: expected integers, got {text!r}")
    return [int(v) for v in vals]


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{p}: no such file")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(_existing(args.config)) if args.config else load_config()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _taxonomy(args):
    return load_taxonomy(_existing(args.taxonomy)) if args.taxonomy else load_taxonomy()


def _fmt(v: float) -> str:
    return repr(float(v))


def tracker_config(cfg: RunConfig) -> TrackerConfig:
    return TrackerConfig(
        n_init=cfg.n_particles,
        n_min=cfg.n_particles_min,
        obs=ObservationParams(cfg.varsigma),
        neff_ratio=cfg.neff_ratio,
        conv_pos_std_m=cfg.conv_pos_std_m,
        conv_theta_std_deg=cfg.conv_theta_std_deg,
        conv_frames=cfg.conv_frames,
        min_len=cfg.min_len,
        max_len=cfg.max_len,
        seed=cfg.substream_seed("particles"),
    )


# subcommands ----------------------------------------------------------------


def cmd_rasterize(args) -> int:
    cfg = _config(args)
    tax = _taxonomy(args)
    doc = parse_osm_xml(_existing(args.osm).read_bytes())
    if args.origin:
        lat, lon = _floats(args.origin, 2, "--origin")
        origin = GeoPoint(lat, lon)
    else:
        if not doc.nodes:
            raise UsageError(f"{args.osm}: no nodes to derive an origin from; pass --origin")
        lats = [n.point.lat for n in doc.nodes.values()]
        lons = [n.point.lon for n in doc.nodes.values()]
        origin = GeoPoint((min(lats) + max(lats)) / 2, (min(lons) + max(lons)) / 2)
    frame = LocalFrame.at(origin)
    canvas = build_geometry(doc, frame, tax)
    gsd = args.gsd or cfg.gsd
    if args.bounds:
        bounds = _floats(args.bounds, 4, "--bounds")
    else:
        pts = [project_to_local(n.point, frame) for n in doc.nodes.values()]
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        bounds = [math.floor(min(xs) / gsd) * gsd, math.floor(min(ys) / gsd) * gsd,
                  math.ceil(max(xs) / gsd) * gsd, math.ceil(max(ys) / gsd) * gsd]
    raster = rasterize(canvas, bounds, gsd)
    raster.validate(tax)
    out = Path(args.out)
    save_raster(raster, out)
    if args.format == "png":
        save_raster_png(raster, tax, out.with_suffix(".png"))
    rep = doc.report
    print(
        f"raster {raster.width}x{raster.height} gsd={gsd} origin=({origin.lat:.7f},{origin.lon:.7f}) "
        f"polygons={len(canvas.polygons)} polylines={len(canvas.polylines)} points={len(canvas.points)} "
        f"dangling_ways={rep.dangling_ways} short_ways={rep.short_ways} demoted_areas={rep.demoted_areas} "
        f"element_errors={len(rep.element_errors)}"
    )
    return 0


def _tile_from_args(args, cfg, raster):
    if args.center:
        cx, cy = _floats(args.center, 2, "--center")
    else:
        cx = raster.origin.x + (raster.width - 1) * raster.gsd / 2
        cy = raster.origin.y + (raster.height - 1) * raster.gsd / 2
    size = args.tile_m or cfg.tile_m
    return crop_tile(raster, LocalPoint(cx, cy), size)


def cmd_embed(args) -> int:
    cfg = _config(args)
    tax = _taxonomy(args)
    raster = load_raster(_existing(args.raster))
    raster.validate(tax)
    tile = _tile_from_args(args, cfg, raster) if (args.center or args.tile_m) else MapTile(raster, raster.origin)
    c_sem = args.c_sem or cfg.c_sem
    table = build_embedding_table(tax, c_sem, cfg.substream_seed("embeddings"))
    grid = embed_map(tile, table)
    save_feature_tensor(grid, args.out)
    print(f"map features {grid.rows}x{grid.cols}x{grid.channels} origin=({_fmt(tile.raster.origin.x)},{_fmt(tile.raster.origin.y)})")
    return 0


def cmd_localize(args) -> int:
    cfg = _config(args)
    tax = _taxonomy(args)
    raster = load_raster(_existing(args.raster))
    raster.validate(tax)
    tile = _tile_from_args(args, cfg, raster)
    table = build_embedding_table(tax, cfg.c_sem, cfg.substream_seed("embeddings"))
    F_map = embed_map(tile, table)
    bins = DepthBins(cfg.d0, cfg.delta, cfg.D)
    cam = CameraIntrinsics(cfg.fx, cfg.cx, cfg.image_cols, cfg.image_rows)

    planted = None
    if args.synth_pose:
        planted = degrees_pose(*_floats(args.synth_pose, 3, "--synth-pose"))
        F_img, alpha = synth_image_features(tile, table, planted, cam, bins)
    elif args.features and args.depth:
        F_img = load_feature_tensor(_existing(args.features)).require(FrameTag.IMAGE_PLANE)
        depth = load_feature_tensor(_existing(args.depth)).require(FrameTag.DEPTH_DISTRIBUTION)
        alpha = DepthDistribution(depth.data.astype(np.float64)).check(tol=1e-5)
        if F_img.data.shape[:2] != (cam.rows, cam.cols):
            raise UsageError(f"image features are {F_img.rows}x{F_img.cols}, camera expects {cam.rows}x{cam.cols}")
    else:
        raise UsageError("give either --synth-pose or both --features and --depth")

    prior = degrees_pose(*_floats(args.prior, 3, "--prior")) if args.prior else None
    restrict = None
    if args.restrict:
        m, deg = _floats(args.restrict, 2, "--restrict")
        restrict = (m, deg)
        if prior is None:
            raise UsageError("--restrict needs --prior")
    match = MatchConfig(K=args.K or cfg.k_infer, backend=args.backend or cfg.backend, dtype=cfg.dtype)
    res = localize(tile, F_map, F_img, alpha, cam, bins, cfg.L, match, prior, restrict, cfg.substream_seed("embeddings"))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.export_features:
        save_feature_tensor(F_img, out / "image_features.osmf")
        save_feature_tensor(FeatureGrid(alpha.probs, FrameTag.DEPTH_DISTRIBUTION), out / "depth.osmf")
    save_feature_tensor(FeatureGrid(res.probs.values, FrameTag.POSE_PROBABILITY), out / "probability.osmf")
    save_heatmap_png(res.probs, out / "heatmap.png")
    p = res.pose
    info = {
        "x": p.x,
        "y": p.y,
        "theta": p.theta,
        "theta_deg": math.degrees(p.theta),
        "cell": list(res.cell),
        "probability": res.probability,
        "volume_origin": [res.probs.origin.x, res.probs.origin.y],
        "gsd": res.probs.gsd,
        "K": res.probs.K,
    }
    if args.topk:
        with open(out / "topk.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["frame", "rank", "x", "y", "theta", "probability"])
            for rank, (q, _, prob) in enumerate(topk_poses(res.probs, args.topk), start=1):
                w.writerow([args.frame_id, rank, _fmt(q.x), _fmt(q.y), _fmt(q.theta), _fmt(prob)])
    if planted is not None:
        want = res.probs.cell_of(planted)
        dh, dw, dk = cell_distance(res.cell, want, res.probs.K)
        info["planted_cell"] = list(want)
        info["recovered"] = bool(dh <= 1 and dw <= 1 and dk <= 1)
    (out / "pose.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    print(f"pose x={p.x:.3f} y={p.y:.3f} theta_deg={math.degrees(p.theta):.3f} probability={res.probability:.6g}")
    if planted is not None:
        print(f"planted cell {tuple(info['planted_cell'])} recovered cell {res.cell} ok={info['recovered']}")
    return 0


def _load_manifest(path: Path):
    try:
        m = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(m, dict) or m.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}: expected an object with version {MANIFEST_VERSION}")
    frames = m.get("frames")
    if not isinstance(frames, list) or not frames:
        raise ManifestError(f"{path}: 'frames' must be a non-empty list")
    noise = m.get("motion_noise", {})
    try:
        sx, st = float(noise.get("sigma_xy", 0.0)), float(noise.get("sigma_theta", 0.0))
    except (TypeError, ValueError, AttributeError):
        raise ManifestError(f"{path}: bad motion_noise") from None
    out = []
    for i, fr in enumerate(frames):
        try:
            vol_path = path.parent / fr["volume"]
            gsd = float(fr["gsd"])
            ox, oy = (float(v) for v in fr["origin"])
            odo = [float(v) for v in fr.get("odometry", (0.0, 0.0, 0.0))]
            gt = fr.get("gt")
            gt = Pose(*(float(v) for v in gt)) if gt is not None else None
        except (KeyError, TypeError, ValueError):
            raise ManifestError(f"{path}: frame {i} needs volume, gsd, origin [x, y] and odometry [dx, dy, dtheta]") from None
        if len(odo) != 3:
            raise ManifestError(f"{path}: frame {i} odometry needs three numbers")
        grid = load_feature_tensor(_existing(vol_path)).require(FrameTag.POSE_SCORE)
        vol = PoseVolume(grid.data.astype(np.float64), "score", gsd, LocalPoint(ox, oy))
        out.append((vol, MotionInput.from_odometry(*odo, sx, st), gt))
    return out


def _synthesize_manifest(args, cfg) -> int:
    out = Path(args.synthesize)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.substream_seed("synthetic"))
    sx, st = (0.0, 0.0) if args.noiseless else (0.5, 0.1 * math.pi)
    seq = synthetic_sequence(rng, args.frames, sigma_xy=sx, sigma_theta=st)
    frames = []
    for t, (obs, gt) in enumerate(zip(seq.observations, seq.poses)):
        name = f"frame_{t:03d}.osmf"
        save_feature_tensor(FeatureGrid(obs.volume.values, FrameTag.POSE_SCORE), out / name)
        frames.append({
            "volume": name,
            "gsd": obs.volume.gsd,
            "origin": [obs.volume.origin.x, obs.volume.origin.y],
            "odometry": list(obs.odometry),
            "gt": list(gt.as_tuple()),
        })
    manifest = {"version": MANIFEST_VERSION, "motion_noise": {"sigma_xy": sx, "sigma_theta": st}, "frames": frames}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(frames)} frames to {out / 'manifest.json'}")
    return 0


def cmd_track(args) -> int:
    cfg = _config(args)
    if args.synthesize:
        return _synthesize_manifest(args, cfg)
    if not args.manifest or not args.out:
        raise UsageError("track needs --manifest and --out (or --synthesize DIR)")
    frames = _load_manifest(_existing(args.manifest))
    est = track_sequence([(v, u) for v, u, _ in frames], tracker_config(cfg))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["frame", "x", "y", "theta", "n_eff", "n_particles"])
        for e in est:
            w.writerow([e.frame, _fmt(e.pose.x), _fmt(e.pose.y), _fmt(e.pose.theta), _fmt(e.n_eff), e.n_particles])
    if args.records:
        if any(gt is None for _, _, gt in frames):
            raise ManifestError("--records needs a gt pose on every manifest frame")
        write_records_csv([EvalRecord(str(e.frame), e.pose, gt) for e, (_, _, gt) in zip(est, frames)], args.records)
    last = est[-1]
    print(f"tracked {len(est)} frames; final pose x={last.pose.x:.3f} y={last.pose.y:.3f} "
          f"theta_deg={math.degrees(last.pose.theta):.3f} particles={last.n_particles}")
    return 0


def cmd_eval(args) -> int:
    records = read_records_csv(_existing(args.records), _existing(args.topk) if args.topk else None)
    try:
        th = Thresholds.parse(args.thresholds)
    except ValueError as e:
        raise UsageError(f"--thresholds: {e}") from None
    report = evaluate(records, th, args.k_max)
    if args.out:
        write_report_json(report, args.out)
    if args.csv:
        write_report_csv(report, args.csv)
    print(f"records={report['n_records']} APE={report['ape_m']:.3f}m AOE={report['aoe_deg']:.3f}deg "
          f"ALatE={report['alat_m']:.3f}m ALonE={report['alon_m']:.3f}m")
    for t in report["thresholds"]:
        print(f"@({t['sigma_p_m']:g}m,{t['sigma_o_deg']:g}deg) PR={t['position_recall']:.4f} OR={t['orientation_recall']:.4f} "
              f"LatR={t['lateral_recall']:.4f} LonR={t['longitudinal_recall']:.4f}")
    return 0


def bench_backends(map_size: int, template: tuple, K: int, channels: int, reps: int, seed: int = 0):
    """Median wall time of brute-force and FFT scoring on one random instance."""
    rng = np.random.default_rng(seed)
    D, L = template
    gsd = 0.5
    F_map = FeatureGrid(rng.standard_normal((map_size, map_size, channels)), FrameTag.MAP_PLANE)
    bev = FeatureGrid(rng.standard_normal((D, L, channels)), FrameTag.CARTESIAN_BEV)
    geom = TemplateGeometry(DepthBins(0.0, gsd, D), L, gsd, gsd)
    cfg = MatchConfig(K=K)
    times = {"brute": [], "fft": []}
    for _ in range(reps):
        for name, fn in (("brute", score_poses_bruteforce), ("fft", score_poses_fft)):
            t0 = time.perf_counter()
            fn(F_map, bev, cfg, geom)
            times[name].append(time.perf_counter() - t0)
    return float(np.median(times["brute"])), float(np.median(times["fft"]))


def cmd_bench(args) -> int:
    sizes = _ints(args.sizes, "--sizes")
    ks = _ints(args.K, "--K")
    if not sizes or not ks:
        raise UsageError("--sizes and --K need at least one value")
    try:
        D, L = (int(v) for v in args.template.lower().split("x"))
    except ValueError:
        raise UsageError(f"--template: expected ROWSxCOLS, got {args.template!r}") from None
    if args.reps < 1 or min(sizes) < 1 or min(ks) < 1:
        raise UsageError("sizes, K and repetitions must be positive")
    rows = []
    for n in sizes:
        for k in ks:
            brute, fft = bench_backends(n, (D, L), k, args.channels, args.reps, args.seed or 0)
            rows.append([n, k, D, L, args.channels, args.reps, brute, fft, brute / fft])
            print(f"map {n}x{n} template {D}x{L} K={k} C={args.channels}: brute {brute:.4f}s fft {fft:.4f}s speedup {brute / fft:.1f}x")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["map_size", "K", "template_rows", "template_cols", "channels", "repetitions",
                    "brute_median_s", "fft_median_s", "speedup"])
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def run_selftest(cfg: RunConfig = RunConfig()) -> list[tuple[str, bool, str]]:
    """Small end-to-end checks; every reported value is deterministic for a seed."""
    results = []
    tax = load_taxonomy()

    osm = generate_neighborhood_osm(cfg.seed)
    doc = parse_osm_xml(osm)
    canvas = build_geometry(doc, LocalFrame.at(DEFAULT_ORIGIN), tax)
    raster = rasterize(canvas, (-40, -40, 40, 40), cfg.gsd)
    counts = [int(np.count_nonzero(p)) for p in raster.planes]
    results.append(("rasterize", all(c > 0 for c in counts), f"nonzero pixels per plane {counts}"))

    rng = np.random.default_rng(cfg.substream_seed("synthetic"))
    geom = TemplateGeometry(DepthBins(0.0, 0.5, 5), 7, 0.5, 0.5)
    F_map = FeatureGrid(rng.standard_normal((24, 24, 3)), FrameTag.MAP_PLANE)
    bev = FeatureGrid(rng.standard_normal((5, 7, 3)), FrameTag.CARTESIAN_BEV)
    a = score_poses_bruteforce(F_map, bev, MatchConfig(K=8), geom).values
    b = score_poses_fft(F_map, bev, MatchConfig(K=8), geom).values
    err = float(np.abs(a - b).max() / np.abs(a).max())
    results.append(("fft_equivalence", err <= 1e-4, f"relative max error {err:.1e}"))

    table = build_embedding_table(tax, cfg.c_sem, cfg.substream_seed("embeddings"))
    # the planted view (32 m deep) stays on the 80 m tile
    tile = crop_tile(raster, LocalPoint(0.0, 0.0), 80.0)
    K = 64
    h, w, k = (int(v) for v in rng.integers((64, 64, 0), (97, 97, K)))
    gt = Pose(tile.raster.origin.x + w * cfg.gsd, tile.raster.origin.y + h * cfg.gsd, theta_bins(K)[k])
    bins = DepthBins(cfg.d0, cfg.delta, cfg.D)
    cam = CameraIntrinsics(cfg.fx, cfg.cx, cfg.image_cols, cfg.image_rows)
    F_img, alpha = synth_image_features(tile, table, gt, cam, bins)
    res = localize(tile, embed_map(tile, table), F_img, alpha, cam, bins, cfg.L, MatchConfig(K=K, dtype=cfg.dtype))
    dh, dw, dk = cell_distance(res.cell, (h, w, k), K)
    results.append(("localize", max(dh, dw, dk) <= 1, f"planted {(h, w, k)} recovered {res.cell}"))

    seq = synthetic_sequence(rng, 10)
    frames = [(o.volume, MotionInput.from_odometry(*o.odometry, 0.5, 0.1 * math.pi)) for o in seq.observations]
    est = track_sequence(frames, tracker_config(cfg))
    records = [EvalRecord(str(e.frame), e.pose, p) for e, p in zip(est, seq.poses)]
    ape = [math.hypot(r.pred.x - r.gt.x, r.pred.y - r.gt.y) for r in records]
    results.append(("track", ape[-1] < ape[0], f"first APE {ape[0]:.3f} m final APE {ape[-1]:.3f} m"))

    rep = evaluate(records)
    results.append(("eval", rep["n_records"] == 10, f"APE {rep['ape_m']:.3f} m AOE {rep['aoe_deg']:.3f} deg"))
    return results


def cmd_selftest(args) -> int:
    results = run_selftest(_config(args))
    lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in results]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0 if all(ok for _, ok, _ in results) else 1


# parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (default: packaged defaults)")
    common.add_argument("--threads", type=int, help="worker threads (also OSMLOC_THREADS)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--taxonomy", help="class taxonomy file (default: packaged)")

    p = argparse.ArgumentParser(prog="osm-localizer", description="Localize camera views against OpenStreetMap rasters.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rasterize", parents=[common], help="rasterize an .osm file")
    r.add_argument("osm")
    r.add_argument("--out", required=True)
    r.add_argument("--bounds", help="xmin,ymin,xmax,ymax in local meters")
    r.add_argument("--origin", help="lat,lon of the local frame origin")
    r.add_argument("--gsd", type=float)
    r.add_argument("--format", choices=("osmr", "png"), default="osmr", help="png also writes a palette PNG")
    r.set_defaults(func=cmd_rasterize)

    e = sub.add_parser("embed", parents=[common], help="embed a raster into map features")
    e.add_argument("raster")
    e.add_argument("--out", required=True)
    e.add_argument("--center", help="x,y tile center (default: whole raster)")
    e.add_argument("--tile-m", type=float)
    e.add_argument("--c-sem", type=int)
    e.set_defaults(func=cmd_embed)

    lo = sub.add_parser("localize", parents=[common], help="localize one frame")
    lo.add_argument("raster")
    lo.add_argument("--out-dir", required=True)
    lo.add_argument("--center", help="x,y tile center (default: raster center)")
    lo.add_argument("--tile-m", type=float)
    lo.add_argument("--synth-pose", help="x,y,theta_deg of a planted camera")
    lo.add_argument("--features", help="IMAGE_PLANE OSMF tensor")
    lo.add_argument("--depth", help="DEPTH_DISTRIBUTION OSMF tensor")
    lo.add_argument("--prior", help="x,y,theta_deg prior pose")
    lo.add_argument("--restrict", help="meters,degrees window around the prior")
    lo.add_argument("--backend", choices=("fft", "brute"))
    lo.add_argument("--K", type=int, help="heading bins")
    lo.add_argument("--topk", type=int, help="also write the top candidates to topk.csv")
    lo.add_argument("--frame-id", default="0")
    lo.add_argument("--export-features", action="store_true")
    lo.set_defaults(func=cmd_localize)

    t = sub.add_parser("track", parents=[common], help="track a sequence of score volumes")
    t.add_argument("--manifest")
    t.add_argument("--out", help="per-frame CSV")
    t.add_argument("--records", help="also write eval records (needs gt in the manifest)")
    t.add_argument("--synthesize", metavar="DIR", help="write a synthetic manifest into DIR and exit")
    t.add_argument("--frames", type=int, default=10)
    t.add_argument("--noiseless", action="store_true")
    t.set_defaults(func=cmd_track)

    ev = sub.add_parser("eval", parents=[common], help="compute localization metrics")
    ev.add_argument("--records", required=True)
    ev.add_argument("--topk", help="candidate sidecar CSV")
    ev.add_argument("--k-max", type=int)
    ev.add_argument("--thresholds", default="1,3,5")
    ev.add_argument("--out", help="JSON report")
    ev.add_argument("--csv", help="CSV report")
    ev.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", parents=[common], help="time brute-force against FFT matching")
    b.add_argument("--sizes", default="64")
    b.add_argument("--K", default="16")
    b.add_argument("--template", default="16x17")
    b.add_argument("--channels", type=int, default=8)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("selftest", parents=[common], help="deterministic end-to-end smoke test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        os.environ["OSMLOC_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e.filename}: no such file", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
