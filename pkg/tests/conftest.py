import json
from pathlib import Path

import numpy as np
import pytest

from dexengine.model import (
    BoundingBox,
    CameraView,
    DetectionFrame,
    Group,
    HandDetection,
    HandSide,
    Keypoint,
    RecordingMeta,
)
from dexengine.signals import HandObservations, impute_locf
from dexengine.synth import generate_dataset


def make_track(xs, ys=None, side=HandSide.Right, meta=None):
    """HandTrack from dense (21, T) coordinate arrays (NaN = missing)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.zeros_like(xs) if ys is None else np.asarray(ys, dtype=float)
    bc = np.vstack([np.nanmean(xs, axis=0), np.nanmean(ys, axis=0)]) if xs.size else np.zeros((2, 0))
    return impute_locf(HandObservations(side, xs, ys, bc), meta)


def make_meta(frame_count=10, fps=30.0, group=Group.Expert, rid="r1", pid="p1", tissue=None,
              view=CameraView.Frontal):
    return RecordingMeta(rid, pid, group, fps, view, frame_count, tissue)


def hand(x0=100.0, y0=100.0, conf=0.9, box_conf=0.9):
    kps = tuple(Keypoint(x0 + k, y0 + 2 * k, conf) for k in range(21))
    return HandDetection(BoundingBox(x0 - 5, y0 - 5, x0 + 30, y0 + 50, box_conf), kps)


@pytest.fixture
def make_frame():
    def _make(i, right=None, left=None, tools=None):
        hands = {}
        if right is not None:
            hands[HandSide.Right] = right
        if left is not None:
            hands[HandSide.Left] = left
        return DetectionFrame(i, hands, tools or {})
    return _make


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    """6 expert + 6 novice synthetic recordings plus one held-out novice."""
    root = tmp_path_factory.mktemp("synthetic")
    data, holdout = root / "dataset", root / "holdout"
    generate_dataset(data, n_experts=6, n_novices=6, seed=7, holdout_dir=holdout)
    return data, holdout / "rec_holdout"


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj))
    return path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import ACCEPTANCE_RESULTS
    except ImportError:
        return
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
