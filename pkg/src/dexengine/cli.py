"""Command-line front end: ``dexengine <command> [options]``.

Exit codes: 0 success, 1 data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .config import ConfigError, RunConfig, dumps_config, load_config
from .errors import DexError, TrackMismatch
from .feedback import MessageTemplates, build_baseline, generate_feedback, load_baseline, save_baseline
from .ingest import (
    DETECTIONS_FILE,
    LABEL_FILES,
    META_FILE,
    atomic_write_text,
    densify,
    dumps_stream,
    load_meta,
    load_recording,
    parse_detections,
    parse_labels,
    read_stream,
    scan_dataset,
    validate_recording,
)
from .model import timeline_to_frames
from .proxies import ProxyInput, compute_proxy_samples, load_bindings, samples_to_csv
from .segmetrics import EvaluationReport, evaluate_multitask
from .signals import SmoothingConfig, build_tracks, tracks_to_frames
from .stats import TTestVariant, group_stats, stats_to_csv, stats_to_dict, stats_to_text

log = logging.getLogger("dexengine")


class DataError(DexError):
    pass


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _pool_map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, in a process pool when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _recordings(cfg: RunConfig) -> list[Path]:
    dirs = scan_dataset(cfg.dataset_root)
    if not dirs:
        raise DataError(f"no recordings under {cfg.dataset_root}")
    return dirs


# Workers receive (directory, config dict) so they pickle cheaply.

def _validate_worker(item):
    directory, cfg_d = item
    cfg = RunConfig.from_dict(cfg_d)
    name = Path(directory).name
    try:
        meta = load_meta(Path(directory) / META_FILE, cfg.rank_table)
    except DexError as exc:
        return name, None, f"{directory}: {exc}"
    try:
        frames = parse_detections(Path(directory) / DETECTIONS_FILE, None, cfg.min_box_conf) \
            if (Path(directory) / DETECTIONS_FILE).exists() else []
        timelines = {}
        for track, fname in LABEL_FILES.items():
            p = Path(directory) / fname
            if p.exists():
                timelines[track] = parse_labels(p, track, meta.frame_count)
    except DexError as exc:
        return meta.recording_id, None, f"{exc}"
    report = validate_recording(meta, frames, timelines, cfg.smoothing.keypoint_conf_threshold)
    return meta.recording_id, report.to_dict(), None


def _smooth_worker(item):
    directory, cfg_d = item
    cfg = RunConfig.from_dict(cfg_d)
    try:
        meta = load_meta(Path(directory) / META_FILE, cfg.rank_table)
        det = Path(directory) / DETECTIONS_FILE
        _, frames = read_stream(det, cfg.min_box_conf) if det.exists() else ({}, [])
        frames = [f for f in frames if f.frame_index < meta.frame_count]
        tracks = build_tracks(densify(frames, meta.frame_count), meta, cfg.smoothing)
        out_frames = tracks_to_frames(frames, tracks)
    except DexError as exc:
        return None, f"{directory}: {exc}"
    header = {"smoothed": True, "recording_id": meta.recording_id, **cfg.smoothing.to_dict()}
    out = Path(cfg.output_dir) / "smoothed" / f"{meta.recording_id}.jsonl"
    atomic_write_text(out, dumps_stream(out_frames, header))
    return meta.recording_id, None


def _proxy_worker(item):
    directory, cfg_d = item
    cfg = RunConfig.from_dict(cfg_d)
    try:
        rec = load_recording(directory, cfg.min_box_conf, cfg.rank_table)
        tracks = build_tracks(rec.frames, rec.meta, cfg.smoothing)
        bindings = load_bindings(cfg.bindings)
        samples = compute_proxy_samples(ProxyInput(rec.meta, tracks, rec.timelines), bindings,
                                        cfg.hand_tool_threshold, cfg.tie_side)
    except DexError as exc:
        return None, f"{directory}: {exc}"
    return samples, None


def _all_samples(cfg: RunConfig, jobs: int, dirs: Optional[Sequence[Path]] = None):
    dirs = list(dirs) if dirs is not None else _recordings(cfg)
    results = _pool_map(_proxy_worker, [(str(d), cfg.to_dict()) for d in dirs], jobs)
    samples = []
    for s, err in results:
        if err:
            raise DataError(err)
        samples.extend(s)
    samples.sort(key=lambda s: s.sort_key)
    return samples


def cmd_validate(cfg: RunConfig, jobs: int) -> int:
    cfg.check_paths()
    out = Path(cfg.output_dir) / "validation"
    results = _pool_map(_validate_worker, [(str(d), cfg.to_dict()) for d in _recordings(cfg)], jobs)
    fatal = []
    lines = []
    for rid, report, err in results:
        if err:
            fatal.append(err)
            lines.append(f"{rid}: ERROR {err}")
            atomic_write_text(out / f"{rid}.json", _dump_json({"recording_id": rid, "ok": False, "error": err}))
            continue
        atomic_write_text(out / f"{rid}.json", _dump_json(report))
        fails = [c for c in report["checks"] if c["status"] == "fail"]
        warns = [c for c in report["checks"] if c["status"] == "warn"]
        if fails:
            fatal.append(f"{rid}: " + "; ".join(f"{c['name']}: {c['detail']}" for c in fails))
        lines.append(f"{rid}: {'FAIL' if fails else 'ok'}"
                     + "".join(f"\n  warn {c['name']}: {c['detail']}" for c in warns)
                     + "".join(f"\n  fail {c['name']}: {c['detail']}" for c in fails))
    atomic_write_text(out / "summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    if fatal:
        print(f"error: {fatal[0]}", file=sys.stderr)
        return 1
    return 0


def cmd_smooth(cfg: RunConfig, jobs: int) -> int:
    cfg.check_paths()
    results = _pool_map(_smooth_worker, [(str(d), cfg.to_dict()) for d in _recordings(cfg)], jobs)
    for rid, err in results:
        if err:
            raise DataError(err)
        print(f"smoothed {rid}")
    return 0


def _evaluate_worker(item):
    gt_dir, pred_dir, cfg_d = item
    cfg = RunConfig.from_dict(cfg_d)
    where = Path(gt_dir).name
    try:
        meta = load_meta(Path(gt_dir) / META_FILE, cfg.rank_table)
        where = meta.recording_id
        gts, preds = {}, {}
        for track, fname in LABEL_FILES.items():
            g, p = Path(gt_dir) / fname, Path(pred_dir) / fname
            if g.exists():
                gts[track] = parse_labels(g, track, meta.frame_count)
            if p.exists():
                preds[track] = parse_labels(p, track, meta.frame_count)
        results = evaluate_multitask(preds, gts, cfg.include_background)
    except DexError as exc:
        return None, None, None, f"{where}: {exc}"
    ribbons = {
        track.value: (timeline_to_frames(gts[track], meta.frame_count), timeline_to_frames(preds[track], meta.frame_count))
        for track in gts
    }
    ribbons = {k: ([l.value for l in g], [l.value for l in p]) for k, (g, p) in ribbons.items()}
    return meta, results, ribbons, None


def cmd_evaluate(cfg: RunConfig, jobs: int, pred_dir: str, gt_dir: Optional[str]) -> int:
    gt_root = Path(gt_dir or cfg.dataset_root)
    if not gt_root.is_dir():
        raise ConfigError(f"ground-truth directory {str(gt_root)!r} does not exist")
    if not Path(pred_dir).is_dir():
        raise ConfigError(f"prediction directory {pred_dir!r} does not exist")
    gt_names = {p.name for p in scan_dataset(gt_root)}
    pred_names = {p.name for p in scan_dataset(pred_dir)}
    if gt_names != pred_names:
        diff = sorted(gt_names ^ pred_names)
        raise TrackMismatch(f"recording sets differ: {', '.join(diff)}")
    items = [(str(gt_root / n), str(Path(pred_dir) / n), cfg.to_dict()) for n in sorted(gt_names)]
    report = EvaluationReport()
    out = Path(cfg.output_dir) / "evaluation"
    for meta, results, ribbons, err in _pool_map(_evaluate_worker, items, jobs):
        if err:
            raise DataError(err)
        report.add(meta.recording_id, results, meta.fold)
        for track, (g, p) in ribbons.items():
            text = "frame,ground_truth,prediction\n" + "".join(f"{i},{a},{b}\n" for i, (a, b) in enumerate(zip(g, p)))
            atomic_write_text(out / "ribbons" / f"{meta.recording_id}_{track}.csv", text)
    atomic_write_text(out / "report.csv", report.to_csv())
    atomic_write_text(out / "report.json", _dump_json({"rows": report.rows, "summary": report.summary(),
                                                       "include_background": cfg.include_background}))
    text = report.to_text()
    atomic_write_text(out / "report.txt", text)
    print(text, end="")
    return 0


def cmd_proxies(cfg: RunConfig, jobs: int) -> int:
    cfg.check_paths()
    samples = _all_samples(cfg, jobs)
    atomic_write_text(Path(cfg.output_dir) / "proxies" / "samples.csv", samples_to_csv(samples))
    print(f"{len(samples)} proxy samples")
    return 0


def cmd_baseline(cfg: RunConfig, jobs: int) -> int:
    cfg.check_paths()
    samples = _all_samples(cfg, jobs)
    baseline = build_baseline(samples, cfg.proxy_thresholds())
    save_baseline(baseline, cfg.baseline_path)
    print(f"baseline with {len(baseline.entries)} entries from {len(baseline.created_from)} expert recordings "
          f"-> {cfg.baseline_path}")
    return 0


def cmd_feedback(cfg: RunConfig, jobs: int, recording: str) -> int:
    cfg.check_paths(need_baseline=True)
    directory = Path(recording)
    if not (directory / META_FILE).exists():
        directory = Path(cfg.dataset_root) / recording
    if not (directory / META_FILE).exists():
        raise DataError(f"recording {recording!r} not found (no {META_FILE})")
    baseline = load_baseline(cfg.baseline_path)
    samples = _all_samples(cfg, 1, [directory])
    templates = MessageTemplates.load(cfg.templates)
    rid = load_meta(directory / META_FILE, cfg.rank_table).recording_id
    report = generate_feedback(samples, baseline, templates, rid)
    out = Path(cfg.output_dir) / "feedback"
    atomic_write_text(out / f"{rid}.json", _dump_json(report.to_dict()))
    text = report.to_text()
    atomic_write_text(out / f"{rid}.txt", text)
    print(text, end="")
    return 0


def cmd_stats(cfg: RunConfig, jobs: int) -> int:
    cfg.check_paths()
    samples = _all_samples(cfg, jobs)
    stats = group_stats(samples, cfg.ttest_variant)
    out = Path(cfg.output_dir) / "stats"
    atomic_write_text(out / "group_stats.csv", stats_to_csv(stats))
    atomic_write_text(out / "group_stats.json", _dump_json(stats_to_dict(stats)))
    text = stats_to_text(stats)
    atomic_write_text(out / "summary.txt", text)
    print(text, end="")
    return 0


def cmd_synth(cfg: RunConfig, jobs: int, root: str, experts: int, novices: int, seed: int,
              holdout: Optional[str]) -> int:
    from .synth import generate_dataset

    metas = generate_dataset(root, experts, novices, seed, holdout_dir=holdout)
    print(f"wrote {len(metas)} recordings under {root}")
    return 0


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--dataset", dest="dataset_root", help="dataset root (one subdirectory per recording)")
    g.add_argument("--out", dest="output_dir", help="output directory")
    g.add_argument("--bindings", help="proxy binding table (JSON)")
    g.add_argument("--baseline", help="expert baseline file")
    g.add_argument("--templates", help="feedback message templates (JSON)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    g.add_argument("--include-background", action=argparse.BooleanOptionalAction, default=None,
                   help="score the background label in edit/F1 (default on)")
    g.add_argument("--ttest", choices=[v.value for v in TTestVariant], help="t-test variant")
    g.add_argument("--window", type=int, help="Savitzky-Golay window (odd)")
    g.add_argument("--poly-order", type=int, help="Savitzky-Golay polynomial order")
    g.add_argument("--hand-tool-threshold", type=float, help="share of frames a hand must hold the tool")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dexengine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check recordings for consistency")
    sub.add_parser("smooth", parents=[common], help="write gated, imputed and smoothed detection streams")
    ev = sub.add_parser("evaluate", parents=[common], help="segmentation metrics of predictions vs ground truth")
    ev.add_argument("pred_dir")
    ev.add_argument("gt_dir", nargs="?", help="ground-truth root (default: dataset root)")
    sub.add_parser("proxies", parents=[common], help="compute proxy samples")
    sub.add_parser("baseline", parents=[common], help="build the expert baseline")
    fb = sub.add_parser("feedback", parents=[common], help="feedback report for one recording")
    fb.add_argument("recording", help="recording id under the dataset root, or a recording directory")
    sub.add_parser("stats", parents=[common], help="novice vs expert statistics and box-plot data")
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    sy = sub.add_parser("synth", parents=[common], help="generate a synthetic known-groups dataset")
    sy.add_argument("root")
    sy.add_argument("--experts", type=int, default=6)
    sy.add_argument("--novices", type=int, default=6)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--holdout", help="directory for one extra held-out novice recording")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    smoothing = cfg.smoothing
    if args.window is not None or args.poly_order is not None:
        try:
            smoothing = SmoothingConfig(
                window=args.window if args.window is not None else smoothing.window,
                poly_order=args.poly_order if args.poly_order is not None else smoothing.poly_order,
                keypoint_conf_threshold=smoothing.keypoint_conf_threshold,
                edge_mode=smoothing.edge_mode,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg.with_overrides(
        dataset_root=args.dataset_root,
        output_dir=args.output_dir,
        bindings=args.bindings,
        baseline=args.baseline,
        templates=args.templates,
        smoothing=smoothing,
        include_background=args.include_background,
        ttest_variant=TTestVariant(args.ttest) if args.ttest else None,
        hand_tool_threshold=args.hand_tool_threshold,
    )


def _setup_logging() -> None:
    level = os.environ.get("DEXENGINE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cmd = args.command
        if cmd == "validate":
            return cmd_validate(cfg, args.jobs)
        if cmd == "smooth":
            return cmd_smooth(cfg, args.jobs)
        if cmd == "evaluate":
            return cmd_evaluate(cfg, args.jobs, args.pred_dir, args.gt_dir)
        if cmd == "proxies":
            return cmd_proxies(cfg, args.jobs)
        if cmd == "baseline":
            return cmd_baseline(cfg, args.jobs)
        if cmd == "feedback":
            return cmd_feedback(cfg, args.jobs, args.recording)
        if cmd == "stats":
            return cmd_stats(cfg, args.jobs)
        if cmd == "show-config":
            print(dumps_config(cfg), end="")
            return 0
        if cmd == "synth":
            return cmd_synth(cfg, args.jobs, args.root, args.experts, args.novices, args.seed, args.holdout)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
