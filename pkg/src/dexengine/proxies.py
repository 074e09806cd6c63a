"""Surgical dexterity proxies computed per gesture occurrence."""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateSegment,
    MissingChannel,
    MissingTissueRegion,
    NoHandMatchesTool,
)
from .model import (
    KP,
    NUM_KEYPOINTS,
    BoundingBox,
    CameraView,
    GestureLabel,
    Group,
    HandSide,
    RecordingMeta,
    Segment,
    SegmentTimeline,
    ToolLabel,
    Track,
    timeline_to_frames,
)
from .signals import HandTrack

log = logging.getLogger(__name__)


class ProxyKind(enum.Enum):
    GestureDuration = "gesture_duration"
    HandOrientation = "hand_orientation"
    ThumbIndexDistance = "thumb_index_distance"
    FingersToTissueDistance = "fingers_to_tissue_distance"
    HandVelocity = "hand_velocity"
    BackgroundTime = "background_time"

    @property
    def unit(self) -> str:
        return PROXY_UNITS[self]

    @property
    def needs_hand(self) -> bool:
        return self not in (ProxyKind.GestureDuration, ProxyKind.BackgroundTime)


PROXY_UNITS = {
    ProxyKind.GestureDuration: "s",
    ProxyKind.BackgroundTime: "s",
    ProxyKind.HandOrientation: "px (signed)",
    ProxyKind.ThumbIndexDistance: "px",
    ProxyKind.FingersToTissueDistance: "px",
    ProxyKind.HandVelocity: "px/s",
}


class Reducer(enum.Enum):
    Mean = "mean"
    Median = "median"

    def __call__(self, values) -> float:
        values = np.asarray(values, dtype=float)
        return float(np.mean(values) if self is Reducer.Mean else np.median(values))


@dataclass(frozen=True)
class HandSelector:
    """Either the hand using ``tool`` or the fixed ``side``."""

    tool: Optional[ToolLabel] = None
    side: Optional[HandSide] = None

    def __post_init__(self):
        if (self.tool is None) == (self.side is None):
            raise ValueError("HandSelector needs exactly one of tool or side")

    def to_dict(self) -> dict:
        return {"tool": self.tool.value} if self.tool is not None else {"side": self.side.value}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HandSelector":
        if "tool" in d:
            return cls(tool=ToolLabel.parse(d["tool"]))
        return cls(side=HandSide.parse(d["side"]))


@dataclass(frozen=True)
class ProxyBinding:
    kind: ProxyKind
    gesture: GestureLabel
    hand: Optional[HandSelector] = None
    reducer: Reducer = Reducer.Mean
    keypoints: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind.needs_hand and self.hand is None:
            raise ValueError(f"{self.kind.value} binding needs a hand selector")
        if self.kind is ProxyKind.BackgroundTime and self.gesture is not GestureLabel.NoGesture:
            raise ValueError("background_time binds to the No Gesture label only")
        if self.keypoints is not None:
            if not self.keypoints or any(not 0 <= k < NUM_KEYPOINTS for k in self.keypoints):
                raise ValueError("keypoint set must be non-empty indices in [0, 20]")

    @property
    def key(self) -> tuple[ProxyKind, GestureLabel]:
        return (self.kind, self.gesture)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "gesture": self.gesture.value, "reducer": self.reducer.value}
        if self.hand is not None:
            d["hand"] = self.hand.to_dict()
        if self.keypoints is not None:
            d["keypoints"] = list(self.keypoints)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProxyBinding":
        return cls(
            kind=ProxyKind(d["kind"]),
            gesture=GestureLabel.parse(d["gesture"]),
            hand=HandSelector.from_dict(d["hand"]) if d.get("hand") else None,
            reducer=Reducer(d.get("reducer", "mean")),
            keypoints=tuple(int(k) for k in d["keypoints"]) if d.get("keypoints") is not None else None,
        )


def load_bindings(path=None) -> list[ProxyBinding]:
    """Read a binding table; the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("dexengine").joinpath("data/default_bindings.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    bindings = [ProxyBinding.from_dict(d) for d in json.loads(text)["bindings"]]
    keys = [b.key for b in bindings]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate (kind, gesture) in binding table")
    return bindings


def gesture_duration(seg: Segment, fps: float) -> float:
    if not fps > 0:
        raise ValueError("fps must be > 0")
    return seg.length / fps


def _require(track: HandTrack, *kps: int) -> None:
    missing = [KP(k).name for k in kps if track.all_missing[k]]
    if missing:
        raise MissingChannel(f"{track.side.value} hand has no observations for {', '.join(missing)}")


def hand_orientation(track: HandTrack, frame: int) -> float:
    """Signed x-offset of index MCP over pinky MCP; positive when pronated."""
    _require(track, KP.IndexMCP, KP.PinkyMCP)
    return float(track.xs[KP.IndexMCP, frame] - track.xs[KP.PinkyMCP, frame])


def thumb_index_distance(track: HandTrack, frame: int) -> float:
    _require(track, KP.ThumbTip, KP.IndexTip)
    return math.hypot(track.xs[KP.ThumbTip, frame] - track.xs[KP.IndexTip, frame],
                      track.ys[KP.ThumbTip, frame] - track.ys[KP.IndexTip, frame])


def fingers_to_tissue_distance(track: HandTrack, frame: int, tissue: Optional[BoundingBox]) -> float:
    """Distance from the thumb/index fingertip midpoint to the tissue rectangle."""
    if tissue is None:
        raise MissingTissueRegion("recording has no tissue region")
    _require(track, KP.ThumbTip, KP.IndexTip)
    mx = 0.5 * (track.xs[KP.ThumbTip, frame] + track.xs[KP.IndexTip, frame])
    my = 0.5 * (track.ys[KP.ThumbTip, frame] + track.ys[KP.IndexTip, frame])
    return tissue.distance_to(float(mx), float(my))


def hand_velocity(track: HandTrack, seg: Segment, fps: float,
                  keypoints: Optional[Sequence[int]] = None, reducer: Reducer = Reducer.Mean) -> float:
    """Per-keypoint frame-to-frame speed over (start, end], reduced over frames and keypoints."""
    if seg.length < 2:
        raise DegenerateSegment(f"velocity needs >= 2 frames, segment has {seg.length}")
    kps = list(range(NUM_KEYPOINTS)) if keypoints is None else list(keypoints)
    if not kps:
        raise ValueError("keypoint set must be non-empty")
    _require(track, *kps)
    sl = slice(seg.start_frame, seg.end_frame + 1)
    dx = np.diff(track.xs[kps, sl], axis=1)
    dy = np.diff(track.ys[kps, sl], axis=1)
    return reducer(np.hypot(dx, dy) * fps)


def _frame_series(kind: ProxyKind, track: HandTrack, seg: Segment, tissue: Optional[BoundingBox]) -> np.ndarray:
    sl = slice(seg.start_frame, seg.end_frame + 1)
    xs, ys = track.xs, track.ys
    if kind is ProxyKind.HandOrientation:
        _require(track, KP.IndexMCP, KP.PinkyMCP)
        return xs[KP.IndexMCP, sl] - xs[KP.PinkyMCP, sl]
    _require(track, KP.ThumbTip, KP.IndexTip)
    if kind is ProxyKind.ThumbIndexDistance:
        return np.hypot(xs[KP.ThumbTip, sl] - xs[KP.IndexTip, sl], ys[KP.ThumbTip, sl] - ys[KP.IndexTip, sl])
    if kind is ProxyKind.FingersToTissueDistance:
        if tissue is None:
            raise MissingTissueRegion("recording has no tissue region")
        mx = 0.5 * (xs[KP.ThumbTip, sl] + xs[KP.IndexTip, sl])
        my = 0.5 * (ys[KP.ThumbTip, sl] + ys[KP.IndexTip, sl])
        dx = np.maximum.reduce([tissue.x_min - mx, np.zeros_like(mx), mx - tissue.x_max])
        dy = np.maximum.reduce([tissue.y_min - my, np.zeros_like(my), my - tissue.y_max])
        return np.hypot(dx, dy)
    raise ValueError(f"{kind.value} is not a per-frame proxy")


@dataclass(frozen=True)
class ProxySample:
    recording_id: str
    participant_id: str
    group: Group
    kind: ProxyKind
    gesture: GestureLabel
    occurrence_index: int
    value: float
    n_frames_used: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"proxy value must be finite, got {self.value}")
        if self.n_frames_used < 1:
            raise ValueError("n_frames_used must be >= 1")

    @property
    def sort_key(self):
        return (self.recording_id, self.kind.value, self.gesture.value, self.occurrence_index)


@dataclass(frozen=True)
class ProxyInput:
    """Everything proxies need from one recording."""

    meta: RecordingMeta
    tracks: Mapping[HandSide, HandTrack]
    timelines: Mapping[Track, SegmentTimeline]


def select_hand(selector: HandSelector, seg: Segment, tool_frames: Mapping[HandSide, Sequence],
                threshold: float = 0.5, tie_side: HandSide = HandSide.Right) -> HandSide:
    """Pick the hand for one occurrence.

    A tool selector matches hands using the tool on at least ``threshold`` of
    the segment's frames; when both match, the larger share wins and equal
    shares go to ``tie_side``.
    """
    if selector.side is not None:
        return selector.side
    shares = {}
    for side in HandSide:
        labels = tool_frames.get(side)
        if labels is None:
            continue
        window = labels[seg.start_frame:seg.end_frame + 1]
        shares[side] = sum(1 for l in window if l == selector.tool) / seg.length
    matches = {s: v for s, v in shares.items() if v >= threshold}
    if not matches:
        raise NoHandMatchesTool(f"no hand holds {selector.tool.value} for >= {threshold:.0%} of frames "
                                f"{seg.start_frame}..{seg.end_frame}")
    best = max(matches.values())
    winners = [s for s, v in matches.items() if v == best]
    return tie_side if tie_side in winners else winners[0]


def compute_proxy_samples(data: ProxyInput, bindings: Sequence[ProxyBinding],
                          hand_tool_threshold: float = 0.5,
                          tie_side: HandSide = HandSide.Right) -> list[ProxySample]:
    meta = data.meta
    gestures = data.timelines[Track.Gesture]
    tool_frames = {
        t.hand: timeline_to_frames(data.timelines[t], meta.frame_count)
        for t in (Track.ToolLeft, Track.ToolRight) if t in data.timelines
    }
    samples: list[ProxySample] = []

    def emit(b: ProxyBinding, occ: int, value: float, n: int) -> None:
        samples.append(ProxySample(meta.recording_id, meta.participant_id, meta.group,
                                   b.kind, b.gesture, occ, float(value), n))

    for b in bindings:
        if b.kind is ProxyKind.HandOrientation and meta.camera_view is not CameraView.Frontal:
            log.warning("%s: hand orientation applied to %s view; only frontal views are meaningful",
                        meta.recording_id, meta.camera_view.value)
        occurrences = gestures.occurrences(b.gesture)
        if b.kind is ProxyKind.BackgroundTime:
            total = sum(s.length for s in occurrences)
            emit(b, 0, total / meta.fps, max(meta.frame_count, 1))
            continue
        for occ, seg in enumerate(occurrences):
            if b.kind is ProxyKind.GestureDuration:
                emit(b, occ, gesture_duration(seg, meta.fps), seg.length)
                continue
            where = f"{meta.recording_id} {b.kind.value}/{b.gesture.value}#{occ}"
            try:
                side = select_hand(b.hand, seg, tool_frames, hand_tool_threshold, tie_side)
                track = data.tracks.get(side)
                if track is None:
                    raise MissingChannel(f"no {side.value} hand track")
                if b.kind is ProxyKind.HandVelocity:
                    value = hand_velocity(track, seg, meta.fps, b.keypoints, b.reducer)
                    emit(b, occ, value, seg.length - 1)
                else:
                    series = _frame_series(b.kind, track, seg, meta.tissue)
                    emit(b, occ, b.reducer(series), len(series))
            except (NoHandMatchesTool, MissingChannel, DegenerateSegment, MissingTissueRegion) as exc:
                log.info("skipped %s: %s", where, exc)
    samples.sort(key=lambda s: s.sort_key)
    return samples


SAMPLE_COLUMNS = ("recording_id", "participant_id", "group", "kind", "gesture", "occurrence", "value", "n_frames")


def samples_to_csv(samples: Sequence[ProxySample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_COLUMNS)
    for s in sorted(samples, key=lambda s: s.sort_key):
        w.writerow([s.recording_id, s.participant_id, s.group.value, s.kind.value, s.gesture.value,
                    s.occurrence_index, repr(s.value), s.n_frames_used])
    return buf.getvalue()


def samples_from_csv(text: str) -> list[ProxySample]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        ProxySample(r["recording_id"], r["participant_id"], Group.parse(r["group"]), ProxyKind(r["kind"]),
                    GestureLabel.parse(r["gesture"]), int(r["occurrence"]), float(r["value"]), int(r["n_frames"]))
        for r in rows
    ]
