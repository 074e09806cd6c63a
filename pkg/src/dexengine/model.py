"""Domain types, label vocabularies and the 21-point hand keypoint layout."""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .errors import (
    EmptyInput,
    GapError,
    MergeError,
    MetadataError,
    OverlapError,
    RangeError,
    UnknownLabel,
)


def _norm(text: str) -> str:
    return re.sub(r"[\s_\-]+", "", str(text)).lower()


class _LabelEnum(enum.Enum):
    """Enum whose value is the serialized string form."""

    @classmethod
    def aliases(cls) -> Mapping[str, str]:
        return {}

    @classmethod
    def parse(cls, text: str):
        key = _norm(text)
        for member in cls:
            if _norm(member.value) == key or _norm(member.name) == key:
                return member
        alias = cls.aliases().get(key)
        if alias is not None:
            return cls(alias)
        raise UnknownLabel(f"unknown {cls.__name__} {text!r}")

    def __str__(self) -> str:
        return self.value


class GestureLabel(_LabelEnum):
    NoGesture = "No Gesture"
    NeedlePassing = "Needle Passing"
    PullTheSuture = "Pull The Suture"
    InstrumentalTie = "Instrumental Tie"
    LayTheKnot = "Lay The Knot"
    CutTheSuture = "Cut The Suture"


class ToolLabel(_LabelEnum):
    NeedleDriver = "needle_driver"
    Scissors = "scissors"
    Forceps = "forceps"
    ForcepsNotUsed = "forceps_not_used"
    NoTool = "no_tool"

    @classmethod
    def aliases(cls) -> Mapping[str, str]:
        return TOOL_ALIASES


# Normalized (lowercase, no separators) alias -> canonical tool string.
TOOL_ALIASES = {
    "nd": "needle_driver",
    "needleholder": "needle_driver",
    "driver": "needle_driver",
    "scissor": "scissors",
    "forcep": "forceps",
    "tweezers": "forceps",
    "forcepsunused": "forceps_not_used",
    "forcepsidle": "forceps_not_used",
    "none": "no_tool",
    "notool": "no_tool",
    "empty": "no_tool",
}

DETECTOR_TOOLS = (
    ToolLabel.NeedleDriver,
    ToolLabel.Scissors,
    ToolLabel.Forceps,
    ToolLabel.ForcepsNotUsed,
)


class HandSide(_LabelEnum):
    Left = "left"
    Right = "right"


class Group(_LabelEnum):
    Novice = "novice"
    Expert = "expert"


class CameraView(_LabelEnum):
    Frontal = "frontal"
    Closeup = "closeup"
    Other = "other"


class Track(_LabelEnum):
    Gesture = "gesture"
    ToolLeft = "tool_left"
    ToolRight = "tool_right"

    @property
    def label_type(self):
        return GestureLabel if self is Track.Gesture else ToolLabel

    @property
    def background(self):
        return GestureLabel.NoGesture if self is Track.Gesture else ToolLabel.NoTool

    @property
    def hand(self) -> Optional[HandSide]:
        return {Track.ToolLeft: HandSide.Left, Track.ToolRight: HandSide.Right}.get(self)


Label = Union[GestureLabel, ToolLabel]


class KP(enum.IntEnum):
    """Indices of the 21-point hand layout (wrist + 4 joints per finger)."""

    Wrist = 0
    ThumbCMC = 1
    ThumbMCP = 2
    ThumbIP = 3
    ThumbTip = 4
    IndexMCP = 5
    IndexPIP = 6
    IndexDIP = 7
    IndexTip = 8
    MiddleMCP = 9
    MiddlePIP = 10
    MiddleDIP = 11
    MiddleTip = 12
    RingMCP = 13
    RingPIP = 14
    RingDIP = 15
    RingTip = 16
    PinkyMCP = 17
    PinkyPIP = 18
    PinkyDIP = 19
    PinkyTip = 20


NUM_KEYPOINTS = 21


def parse_group(text: str, rank_table: Optional[Mapping[str, str]] = None) -> Group:
    """Map a skill-group string to Novice/Expert.

    Intermediate ranks (e.g. "resident") are only accepted when listed in
    ``rank_table``; there is no implicit mapping.
    """
    try:
        return Group.parse(text)
    except UnknownLabel:
        if rank_table:
            table = {_norm(k): v for k, v in rank_table.items()}
            if _norm(text) in table:
                return Group.parse(table[_norm(text)])
        raise


@dataclass(frozen=True, slots=True)
class Keypoint:
    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("keypoint coordinates must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"keypoint confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("bounding box min exceeds max")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"box confidence {self.confidence} outside [0, 1]")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def distance_to(self, x: float, y: float) -> float:
        """Euclidean distance from a point to the rectangle (0 inside)."""
        dx = max(self.x_min - x, 0.0, x - self.x_max)
        dy = max(self.y_min - y, 0.0, y - self.y_max)
        return math.hypot(dx, dy)


@dataclass(frozen=True, slots=True)
class HandDetection:
    box: BoundingBox
    keypoints: tuple[Keypoint, ...]

    def __post_init__(self):
        if len(self.keypoints) != NUM_KEYPOINTS:
            raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got {len(self.keypoints)}")


@dataclass(frozen=True)
class DetectionFrame:
    """Detector output for one frame; at most one detection per hand and tool class."""

    frame_index: int
    hands: Mapping[HandSide, HandDetection] = field(default_factory=dict)
    tools: Mapping[ToolLabel, BoundingBox] = field(default_factory=dict)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if ToolLabel.NoTool in self.tools:
            raise ValueError("NoTool is not a detector class")

    def hand(self, side: HandSide) -> Optional[HandDetection]:
        return self.hands.get(side)


@dataclass(frozen=True)
class RecordingMeta:
    recording_id: str
    participant_id: str
    group: Group
    fps: float
    camera_view: CameraView
    frame_count: int
    tissue: Optional[BoundingBox] = None
    fold: Optional[int] = None

    def __post_init__(self):
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise MetadataError(f"{self.recording_id}: fps must be > 0, got {self.fps}")
        if self.frame_count < 0:
            raise MetadataError(f"{self.recording_id}: frame_count must be >= 0")

    def to_dict(self) -> dict:
        out = {
            "recording_id": self.recording_id,
            "participant_id": self.participant_id,
            "group": self.group.value,
            "fps": self.fps,
            "camera_view": self.camera_view.value,
            "frame_count": self.frame_count,
        }
        if self.tissue is not None:
            t = self.tissue
            out["tissue"] = [t.x_min, t.y_min, t.x_max, t.y_max]
        if self.fold is not None:
            out["fold"] = self.fold
        return out

    @classmethod
    def from_dict(cls, d: Mapping, rank_table: Optional[Mapping[str, str]] = None) -> "RecordingMeta":
        required = ("recording_id", "participant_id", "group", "fps", "camera_view", "frame_count")
        missing = [k for k in required if k not in d]
        if missing:
            raise MetadataError(f"metadata missing fields: {', '.join(missing)}")
        tissue = d.get("tissue")
        try:
            return cls(
                recording_id=str(d["recording_id"]),
                participant_id=str(d["participant_id"]),
                group=parse_group(d["group"], rank_table),
                fps=float(d["fps"]),
                camera_view=CameraView.parse(d["camera_view"]),
                frame_count=int(d["frame_count"]),
                tissue=BoundingBox(*map(float, tissue[:4])) if tissue is not None else None,
                fold=int(d["fold"]) if d.get("fold") is not None else None,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, MetadataError):
                raise
            raise MetadataError(f"invalid metadata: {exc}") from exc


@dataclass(frozen=True, slots=True)
class Segment:
    """Labelled frame interval; both ends inclusive."""

    label: Label
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame < 0 or self.start_frame > self.end_frame:
            raise ValueError(f"invalid segment bounds {self.start_frame}..{self.end_frame}")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class SegmentTimeline:
    track: Track
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def frame_count(self) -> int:
        return self.segments[-1].end_frame + 1 if self.segments else 0

    def labels(self) -> list:
        return [s.label for s in self.segments]

    def occurrences(self, label: Label) -> list[Segment]:
        return [s for s in self.segments if s.label == label]

    def validate(self, frame_count: Optional[int] = None) -> None:
        """Raise if the timeline is not a contiguous, merged cover of [0, frame_count)."""
        expected = 0
        prev = None
        for seg in self.segments:
            if seg.start_frame > expected:
                raise GapError(f"{self.track.value}: frames {expected}..{seg.start_frame - 1} uncovered")
            if seg.start_frame < expected:
                raise OverlapError(f"{self.track.value}: segment at {seg.start_frame} overlaps previous")
            if prev is not None and prev.label == seg.label:
                raise MergeError(
                    f"{self.track.value}: adjacent segments share label {seg.label.value!r} at frame {seg.start_frame}"
                )
            expected = seg.end_frame + 1
            prev = seg
        if frame_count is not None:
            if expected > frame_count:
                raise RangeError(f"{self.track.value}: segments reach frame {expected - 1} >= frame_count {frame_count}")
            if expected < frame_count:
                raise GapError(f"{self.track.value}: frames {expected}..{frame_count - 1} uncovered")


def timeline_to_frames(t: SegmentTimeline, frame_count: int) -> list:
    t.validate(frame_count)
    out = []
    for seg in t.segments:
        out.extend([seg.label] * seg.length)
    return out


def frames_to_timeline(labels: Sequence, track: Track) -> SegmentTimeline:
    if len(labels) == 0:
        raise EmptyInput("cannot build a timeline from an empty label list")
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segments.append(Segment(labels[start], start, i - 1))
            start = i
    return SegmentTimeline(track, tuple(segments))
