"""Synthetic recordings with controllable skill differences.

Novices get longer idle (No Gesture) periods, hold the suture closer to the
tissue while cutting, and pull the suture more slowly. Everything else is
drawn from the same distributions for both groups.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .ingest import (
    DETECTIONS_FILE,
    LABEL_FILES,
    META_FILE,
    serialize_detections,
    write_labels,
    write_meta,
)
from .model import (
    KP,
    BoundingBox,
    CameraView,
    DetectionFrame,
    GestureLabel,
    Group,
    HandDetection,
    HandSide,
    Keypoint,
    RecordingMeta,
    Segment,
    SegmentTimeline,
    ToolLabel,
    Track,
    frames_to_timeline,
)

TISSUE = BoundingBox(200.0, 300.0, 440.0, 420.0)

# Hand shape in a local frame (pixels), wrist at the origin, fingers along -y.
_FINGER_BASE_X = {1: -22.0, 5: -12.0, 9: 0.0, 13: 11.0, 17: 21.0}
_JOINT_STEP = 14.0


def hand_template() -> np.ndarray:
    pts = np.zeros((21, 2))
    for base, bx in _FINGER_BASE_X.items():
        for j in range(4):
            y = -30.0 - j * _JOINT_STEP if base != 1 else -12.0 - j * 10.0
            x = bx if base != 1 else bx - j * 8.0
            pts[base + j] = (x, y)
    return pts


@dataclass(frozen=True)
class GroupProfile:
    idle_frames: tuple[float, float]      # mean, sd of each No Gesture segment length
    tissue_distance: tuple[float, float]  # fingertip midpoint height above tissue (px)
    pull_speed: tuple[float, float]       # px / frame of the needle driver hand


PROFILES = {
    Group.Expert: GroupProfile(idle_frames=(30.0, 5.0), tissue_distance=(80.0, 6.0), pull_speed=(6.0, 0.5)),
    Group.Novice: GroupProfile(idle_frames=(75.0, 8.0), tissue_distance=(30.0, 6.0), pull_speed=(3.0, 0.5)),
}

_STITCH = (
    (GestureLabel.NeedlePassing, 60),
    (GestureLabel.PullTheSuture, 40),
    (GestureLabel.InstrumentalTie, 70),
    (GestureLabel.LayTheKnot, 40),
    (GestureLabel.CutTheSuture, 35),
)

_RIGHT_TOOL = {
    GestureLabel.NeedlePassing: ToolLabel.NeedleDriver,
    GestureLabel.PullTheSuture: ToolLabel.NeedleDriver,
    GestureLabel.InstrumentalTie: ToolLabel.NeedleDriver,
    GestureLabel.CutTheSuture: ToolLabel.Scissors,
}
_LEFT_TOOL = {GestureLabel.NeedlePassing: ToolLabel.Forceps}


def _plan(rng: np.random.Generator, profile: GroupProfile, stitches: int) -> list[GestureLabel]:
    frames: list[GestureLabel] = []

    def idle():
        n = max(5, int(round(rng.normal(*profile.idle_frames))))
        frames.extend([GestureLabel.NoGesture] * n)

    for _ in range(stitches):
        idle()
        for gesture, base in _STITCH:
            n = max(8, int(round(base * rng.uniform(0.85, 1.15))))
            frames.extend([gesture] * n)
            if gesture is GestureLabel.LayTheKnot:
                idle()
    idle()
    return frames


def _place(template: np.ndarray, x: float, y: float, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return template @ rot.T + (x, y)


def generate_recording(directory, recording_id: str, participant_id: str, group: Group,
                       seed: int, stitches: int = 2, fps: float = 30.0,
                       participant_offset: Optional[np.ndarray] = None) -> RecordingMeta:
    """Write one synthetic recording directory and return its metadata."""
    rng = np.random.default_rng(seed)
    profile = PROFILES[group]
    offset = participant_offset if participant_offset is not None else np.zeros(3)
    gestures = _plan(rng, profile, stitches)
    n = len(gestures)
    # Hand size and resting rotation vary between recordings for both groups.
    template = hand_template() * rng.normal(1.0, 0.06)
    angle_offset = rng.normal(0.0, 0.12)

    # Per-recording skill parameters with a participant-level offset.
    tissue_d = profile.tissue_distance[0] + offset[0] * profile.tissue_distance[1] + rng.normal(0, 2.0)
    pull_v = profile.pull_speed[0] + offset[1] * profile.pull_speed[1] + rng.normal(0, 0.15)

    right = np.empty((n, 2))
    left = np.empty((n, 2))
    rpos = np.array([380.0, 260.0])
    lpos = np.array([260.0, 260.0])
    for t, g in enumerate(gestures):
        if g is GestureLabel.PullTheSuture:
            rpos = rpos + (pull_v * 0.6, -pull_v * 0.8)
        else:
            rpos = rpos + (380.0 - rpos) * 0.08 + rng.normal(0, 0.6, 2)
            rpos[1] += (260.0 - rpos[1]) * 0.08
        if g is GestureLabel.CutTheSuture:
            # left fingertips (thumb/index midpoint) hover tissue_d above the tissue top edge
            target = np.array([300.0, TISSUE.y_min - tissue_d])
            tip_mid = 0.5 * (template[KP.ThumbTip] + template[KP.IndexTip])
            lpos = lpos + (target - tip_mid - lpos) * 0.5
        else:
            lpos = lpos + ((260.0, 260.0) - lpos) * 0.08 + rng.normal(0, 0.6, 2)
        right[t], left[t] = rpos, lpos

    frames = []
    for t in range(n):
        if rng.random() < 0.02:
            continue  # detector dropped the frame
        hands = {}
        for side, pos in ((HandSide.Right, right[t]), (HandSide.Left, left[t])):
            angle = 0.15 * math.sin(t / 25.0) + angle_offset + (0.1 if side is HandSide.Right else -0.1)
            pts = _place(template, pos[0], pos[1], angle) + rng.normal(0, 0.8, (21, 2))
            conf = np.where(rng.random(21) < 0.05, rng.uniform(0.05, 0.29, 21), rng.uniform(0.6, 0.99, 21))
            kps = tuple(Keypoint(round(float(x), 3), round(float(y), 3), round(float(c), 3))
                        for (x, y), c in zip(pts, conf))
            lo, hi = pts.min(axis=0) - 5, pts.max(axis=0) + 5
            box = BoundingBox(round(float(lo[0]), 3), round(float(lo[1]), 3), round(float(hi[0]), 3),
                              round(float(hi[1]), 3), round(float(rng.uniform(0.7, 0.99)), 3))
            hands[side] = HandDetection(box, kps)
        tools = {}
        tool = _RIGHT_TOOL.get(gestures[t])
        if tool is not None:
            x, y = right[t]
            tools[tool] = BoundingBox(round(x - 10, 3), round(y - 80, 3), round(x + 30, 3), round(y - 20, 3), 0.9)
        frames.append(DetectionFrame(t, hands, tools))

    meta = RecordingMeta(recording_id, participant_id, group, fps, CameraView.Frontal, n, TISSUE)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_meta(meta, directory / META_FILE)
    serialize_detections(frames, directory / DETECTIONS_FILE)
    write_labels(frames_to_timeline(gestures, Track.Gesture), directory / LABEL_FILES[Track.Gesture])
    right_tools = [_RIGHT_TOOL.get(g, ToolLabel.NoTool) for g in gestures]
    left_tools = [_LEFT_TOOL.get(g, ToolLabel.NoTool) for g in gestures]
    write_labels(frames_to_timeline(right_tools, Track.ToolRight), directory / LABEL_FILES[Track.ToolRight])
    write_labels(frames_to_timeline(left_tools, Track.ToolLeft), directory / LABEL_FILES[Track.ToolLeft])
    return meta


def generate_dataset(root, n_experts: int = 6, n_novices: int = 6, seed: int = 0,
                     stitches: int = 2, holdout_dir=None) -> list[RecordingMeta]:
    """Write a known-groups dataset; optionally one extra novice under ``holdout_dir``."""
    rng = np.random.default_rng(seed)
    metas = []
    specs = [(Group.Expert, i) for i in range(n_experts)] + [(Group.Novice, i) for i in range(n_novices)]
    for group, i in specs:
        pid = f"{group.value[0].upper()}{i:02d}"
        offset = rng.normal(0, 1, 3)
        rid = f"rec_{pid}"
        metas.append(generate_recording(Path(root) / rid, rid, pid, group,
                                        seed=int(rng.integers(2**31)), stitches=stitches,
                                        participant_offset=offset))
    if holdout_dir is not None:
        offset = rng.normal(0, 1, 3)
        metas.append(generate_recording(Path(holdout_dir) / "rec_holdout", "rec_holdout", "H00", Group.Novice,
                                        seed=int(rng.integers(2**31)), stitches=stitches,
                                        participant_offset=offset))
    return metas


def perturb_timeline(t: SegmentTimeline, rng: np.random.Generator, max_shift: int = 5) -> SegmentTimeline:
    """Jitter inner boundaries of a timeline, keeping it valid (used for prediction fixtures)."""
    n = t.frame_count
    bounds = [s.start_frame for s in t.segments[1:]]
    labels = [s.label for s in t.segments]
    new_bounds = []
    lo = 0
    for i, b in enumerate(bounds):
        hi = bounds[i + 1] - 1 if i + 1 < len(bounds) else n - 1
        nb = int(np.clip(b + rng.integers(-max_shift, max_shift + 1), lo + 1, hi))
        new_bounds.append(nb)
        lo = nb
    starts = [0] + new_bounds
    ends = [s - 1 for s in new_bounds] + [n - 1]
    return SegmentTimeline(t.track, tuple(Segment(l, s, e) for l, s, e in zip(labels, starts, ends)))
