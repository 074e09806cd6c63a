"""Reading and validating detection streams, label files and recording metadata.

On-disk layout of one recording directory::

    meta.json          recording metadata
    detections.jsonl   one JSON record per frame
    gesture.csv        start_frame,end_frame,label
    tool_left.csv      optional, tool usage of the left hand
    tool_right.csv     optional, tool usage of the right hand
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DuplicateFrame,
    MetadataError,
    NonMonotoneFrame,
    ParseError,
    TimelineError,
    UnknownLabel,
)
from .model import (
    NUM_KEYPOINTS,
    BoundingBox,
    DetectionFrame,
    HandDetection,
    HandSide,
    Keypoint,
    RecordingMeta,
    Segment,
    SegmentTimeline,
    ToolLabel,
    Track,
)

log = logging.getLogger(__name__)

META_FILE = "meta.json"
DETECTIONS_FILE = "detections.jsonl"
LABEL_FILES = {Track.Gesture: "gesture.csv", Track.ToolLeft: "tool_left.csv", Track.ToolRight: "tool_right.csv"}

# Detections below this box confidence are treated as absent.
DEFAULT_BOX_CONF = 0.5


def _box(values, line_no, path) -> BoundingBox:
    if not isinstance(values, list) or len(values) != 5:
        raise ParseError(line_no, "box must be [x_min, y_min, x_max, y_max, conf]", path)
    try:
        return BoundingBox(*(float(v) for v in values))
    except (TypeError, ValueError) as exc:
        raise ParseError(line_no, f"invalid box: {exc}", path) from None


def _keypoints(values, line_no, path) -> tuple[Keypoint, ...]:
    if not isinstance(values, list) or len(values) != NUM_KEYPOINTS:
        n = len(values) if isinstance(values, list) else "non-list"
        raise ParseError(line_no, f"kps must hold exactly {NUM_KEYPOINTS} entries, got {n}", path)
    try:
        return tuple(Keypoint(float(k[0]), float(k[1]), float(k[2])) for k in values)
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(line_no, f"invalid keypoint: {exc}", path) from None


def parse_record(record: Mapping, line_no: int = 0, path=None, min_box_conf: float = DEFAULT_BOX_CONF) -> DetectionFrame:
    """Build a DetectionFrame from one decoded record, keeping the best box per class."""
    if not isinstance(record, dict):
        raise ParseError(line_no, "record must be an object", path)
    frame = record.get("frame")
    if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
        raise ParseError(line_no, f"'frame' must be a non-negative integer, got {frame!r}", path)

    hands: dict[HandSide, HandDetection] = {}
    for h in record.get("hands") or []:
        if not isinstance(h, dict):
            raise ParseError(line_no, "hand entry must be an object", path)
        try:
            side = HandSide.parse(h.get("side", ""))
        except UnknownLabel as exc:
            raise ParseError(line_no, str(exc), path) from None
        box = _box(h.get("box"), line_no, path)
        kps = _keypoints(h.get("kps"), line_no, path)
        if box.confidence < min_box_conf:
            continue
        best = hands.get(side)
        if best is None or box.confidence > best.box.confidence:
            hands[side] = HandDetection(box, kps)

    tools: dict[ToolLabel, BoundingBox] = {}
    for t in record.get("tools") or []:
        if not isinstance(t, dict):
            raise ParseError(line_no, "tool entry must be an object", path)
        try:
            cls = ToolLabel.parse(t.get("class", ""))
        except UnknownLabel as exc:
            raise ParseError(line_no, str(exc), path) from None
        if cls is ToolLabel.NoTool:
            raise ParseError(line_no, "'no_tool' is not a detector class", path)
        box = _box(t.get("box"), line_no, path)
        if box.confidence < min_box_conf:
            continue
        best = tools.get(cls)
        if best is None or box.confidence > best.confidence:
            tools[cls] = box

    return DetectionFrame(frame, dict(sorted(hands.items(), key=lambda kv: kv[0].value)),
                          dict(sorted(tools.items(), key=lambda kv: kv[0].value)))


def read_stream(path, min_box_conf: float = DEFAULT_BOX_CONF) -> tuple[dict, list[DetectionFrame]]:
    """Return (header, frames) from a detection stream file.

    A header is an optional first line of the form ``{"header": {...}}``.
    """
    header: dict = {}
    frames: list[DetectionFrame] = []
    last = -1
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}", path) from None
            if isinstance(record, dict) and "header" in record and "frame" not in record:
                if frames or header:
                    raise ParseError(line_no, "header must be the first record", path)
                header = dict(record["header"])
                continue
            frame = parse_record(record, line_no, path, min_box_conf)
            if frame.frame_index == last:
                raise DuplicateFrame(line_no, f"duplicate frame {last}", path)
            if frame.frame_index < last:
                raise NonMonotoneFrame(line_no, f"frame {frame.frame_index} after {last}", path)
            last = frame.frame_index
            frames.append(frame)
    return header, frames


def parse_detections(path, frame_count: Optional[int] = None, min_box_conf: float = DEFAULT_BOX_CONF) -> list[DetectionFrame]:
    """Parse a detection stream; with ``frame_count`` the result is densified."""
    _, frames = read_stream(path, min_box_conf)
    if frame_count is not None:
        frames = densify(frames, frame_count)
    return frames


def densify(frames: Sequence[DetectionFrame], frame_count: int) -> list[DetectionFrame]:
    """Materialize missing frames as empty ones; frames beyond frame_count are dropped."""
    by_index = {f.frame_index: f for f in frames}
    return [by_index.get(i) or DetectionFrame(i) for i in range(frame_count)]


def frame_to_record(frame: DetectionFrame) -> dict:
    """Canonical record: hands and tools in enum declaration order."""
    hands = []
    for side in (s for s in HandSide if s in frame.hands):
        det = frame.hands[side]
        b = det.box
        hands.append({
            "side": side.value,
            "box": [b.x_min, b.y_min, b.x_max, b.y_max, b.confidence],
            "kps": [[k.x, k.y, k.confidence] for k in det.keypoints],
        })
    tools = [
        {"class": cls.value, "box": [b.x_min, b.y_min, b.x_max, b.y_max, b.confidence]}
        for cls, b in ((c, frame.tools[c]) for c in ToolLabel if c in frame.tools)
    ]
    return {"frame": frame.frame_index, "hands": hands, "tools": tools}


def dumps_stream(frames: Iterable[DetectionFrame], header: Optional[Mapping] = None) -> str:
    buf = io.StringIO()
    if header is not None:
        buf.write(json.dumps({"header": dict(header)}, sort_keys=True, separators=(",", ":")))
        buf.write("\n")
    for f in frames:
        buf.write(json.dumps(frame_to_record(f), separators=(",", ":")))
        buf.write("\n")
    return buf.getvalue()


def serialize_detections(frames: Iterable[DetectionFrame], path, header: Optional[Mapping] = None) -> None:
    atomic_write_text(path, dumps_stream(frames, header))


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary sibling file and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _is_int(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def parse_label_rows(rows: Iterable[Sequence[str]], track: Track, frame_count: int, path=None) -> SegmentTimeline:
    label_type = track.label_type
    segments = []
    for i, row in enumerate(rows, start=1):
        row = [c.strip() for c in row]
        if not row or all(c == "" for c in row):
            continue
        if i == 1 and not _is_int(row[0]):
            continue  # header row
        if len(row) < 3:
            raise ParseError(i, "expected start_frame,end_frame,label", path)
        try:
            start, end = int(row[0]), int(row[1])
        except ValueError:
            raise ParseError(i, f"non-integer frame bounds {row[0]!r},{row[1]!r}", path) from None
        label = label_type.parse(",".join(row[2:]))
        try:
            segments.append(Segment(label, start, end))
        except ValueError as exc:
            raise ParseError(i, str(exc), path) from None
    segments.sort(key=lambda s: (s.start_frame, s.end_frame))
    merged: list[Segment] = []
    for seg in segments:
        prev = merged[-1] if merged else None
        if prev is not None and prev.label == seg.label and prev.end_frame + 1 == seg.start_frame:
            merged[-1] = Segment(seg.label, prev.start_frame, seg.end_frame)
        else:
            merged.append(seg)
    timeline = SegmentTimeline(track, tuple(merged))
    timeline.validate(frame_count)
    return timeline


def parse_labels(path, track: Track, frame_count: int) -> SegmentTimeline:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_label_rows(csv.reader(fh), track, frame_count, path)


def dumps_labels(timeline: SegmentTimeline) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start_frame", "end_frame", "label"])
    for s in timeline.segments:
        w.writerow([s.start_frame, s.end_frame, s.label.value])
    return buf.getvalue()


def write_labels(timeline: SegmentTimeline, path) -> None:
    atomic_write_text(path, dumps_labels(timeline))


def load_meta(path, rank_table: Optional[Mapping[str, str]] = None) -> RecordingMeta:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise MetadataError(f"{path}: metadata file missing") from None
    except json.JSONDecodeError as exc:
        raise MetadataError(f"{path}: invalid JSON: {exc.msg}") from None
    return RecordingMeta.from_dict(data, rank_table)


def write_meta(meta: RecordingMeta, path) -> None:
    atomic_write_text(path, json.dumps(meta.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Recording:
    meta: RecordingMeta
    frames: tuple[DetectionFrame, ...]
    timelines: Mapping[Track, SegmentTimeline]

    @property
    def recording_id(self) -> str:
        return self.meta.recording_id


def load_recording(directory, min_box_conf: float = DEFAULT_BOX_CONF,
                   rank_table: Optional[Mapping[str, str]] = None) -> Recording:
    directory = Path(directory)
    meta = load_meta(directory / META_FILE, rank_table)
    det_path = directory / DETECTIONS_FILE
    frames = parse_detections(det_path, meta.frame_count, min_box_conf) if det_path.exists() else densify([], meta.frame_count)
    timelines = {}
    for track, name in LABEL_FILES.items():
        p = directory / name
        if p.exists():
            timelines[track] = parse_labels(p, track, meta.frame_count)
        elif track is Track.Gesture:
            raise MetadataError(f"{directory}: missing {name}")
    return Recording(meta, tuple(frames), timelines)


def scan_dataset(root) -> list[Path]:
    """Recording directories under root, sorted by name."""
    root = Path(root)
    return sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))


@dataclass(frozen=True)
class Check:
    name: str
    status: str  # "pass" | "warn" | "fail"
    detail: str = ""


@dataclass
class ValidationReport:
    recording_id: str
    checks: list[Check] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    @property
    def warnings(self) -> list[Check]:
        return [c for c in self.checks if c.status == "warn"]

    def add(self, name: str, status: str, detail: str = "") -> None:
        self.checks.append(Check(name, status, detail))

    def to_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "ok": self.ok,
            "checks": [{"name": c.name, "status": c.status, "detail": c.detail} for c in self.checks],
            "stats": self.stats,
        }


def validate_recording(meta: RecordingMeta, detections: Sequence[DetectionFrame],
                       timelines: Mapping[Track, SegmentTimeline],
                       kp_threshold: float = 0.3) -> ValidationReport:
    report = ValidationReport(meta.recording_id)
    report.add("fps", "pass" if meta.fps > 0 else "fail", f"fps={meta.fps}")

    problems = []
    if Track.Gesture not in timelines:
        problems.append("gesture timeline missing")
    for track, t in sorted(timelines.items(), key=lambda kv: kv[0].value):
        if t.frame_count != meta.frame_count:
            problems.append(f"{track.value} covers {t.frame_count} frames, metadata says {meta.frame_count}")
        else:
            try:
                t.validate(meta.frame_count)
            except TimelineError as exc:
                problems.append(str(exc))
    beyond = [f.frame_index for f in detections if f.frame_index >= meta.frame_count]
    if beyond:
        problems.append(f"{len(beyond)} detection frames beyond frame_count (first {beyond[0]})")
    report.add("frame_coverage", "fail" if problems else "pass", "; ".join(problems))

    n = max(meta.frame_count, 1)
    for side in HandSide:
        present = sum(1 for f in detections if side in f.hands)
        rate = present / n
        report.stats[f"hand_presence_{side.value}"] = rate
        if present == 0:
            report.add(f"hand_presence_{side.value}", "warn", f"hand never detected: {side.value}")
        else:
            report.add(f"hand_presence_{side.value}", "pass", f"{rate:.4f}")

    confs = np.array([k.confidence for f in detections for d in f.hands.values() for k in d.keypoints])
    if confs.size:
        summary = {
            "count": int(confs.size),
            "min": float(confs.min()),
            "median": float(np.median(confs)),
            "mean": float(confs.mean()),
            "below_threshold": float(np.mean(confs < kp_threshold)),
        }
    else:
        summary = {"count": 0}
    report.stats["keypoint_confidence"] = summary
    report.add("keypoint_confidence", "pass", json.dumps(summary, sort_keys=True))

    if meta.tissue is None:
        report.add("tissue_region", "warn", "no tissue region; fingers-to-tissue proxy unavailable")
    else:
        report.add("tissue_region", "pass")
    return report
