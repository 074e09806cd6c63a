import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dexengine.errors import DegenerateSegment, MissingChannel, MissingTissueRegion, NoHandMatchesTool
from dexengine.model import KP, BoundingBox, CameraView, GestureLabel, HandSide, Segment, ToolLabel, Track, frames_to_timeline
from dexengine.proxies import (
    HandSelector,
    ProxyBinding,
    ProxyInput,
    ProxyKind,
    Reducer,
    compute_proxy_samples,
    fingers_to_tissue_distance,
    gesture_duration,
    hand_orientation,
    hand_velocity,
    load_bindings,
    samples_from_csv,
    samples_to_csv,
    select_hand,
    thumb_index_distance,
)

from conftest import make_meta, make_track

G = GestureLabel


def track_with(points, frames=1, side=HandSide.Right):
    """Track whose keypoints sit at the origin except for ``points`` {kp: (x, y)}."""
    xs, ys = np.zeros((21, frames)), np.zeros((21, frames))
    for k, (x, y) in points.items():
        xs[k], ys[k] = x, y
    return make_track(xs, ys, side)


# -- per-frame formulas -------------------------------------------------------

def test_duration_examples():
    assert gesture_duration(Segment(G.NeedlePassing, 30, 119), 30.0) == 3.0
    assert gesture_duration(Segment(G.NeedlePassing, 5, 5), 30.0) == 1 / 30
    with pytest.raises(ValueError):
        gesture_duration(Segment(G.NeedlePassing, 0, 1), 0.0)


@settings(max_examples=100)
@given(st.lists(st.sampled_from(list(G)), min_size=1, max_size=300), st.sampled_from([25.0, 30.0, 60.0]))
def test_duration_partition(frames, fps):
    tl = frames_to_timeline(frames, Track.Gesture)
    total = sum(gesture_duration(s, fps) for s in tl.segments)
    assert total == pytest.approx(len(frames) / fps, rel=1e-12)
    # integer frame counts sum exactly
    assert sum(s.length for s in tl.segments) == len(frames)


@pytest.mark.parametrize("x_index, x_pinky, expected", [(100, 50, 50.0), (70, 70, 0.0), (40, 90, -50.0)])
def test_orientation_examples(x_index, x_pinky, expected):
    t = track_with({KP.IndexMCP: (x_index, 10), KP.PinkyMCP: (x_pinky, 30)})
    assert hand_orientation(t, 0) == expected


def test_thumb_index_examples():
    assert thumb_index_distance(track_with({KP.ThumbTip: (0, 0), KP.IndexTip: (3, 4)}), 0) == 5.0
    assert thumb_index_distance(track_with({KP.ThumbTip: (7, 7), KP.IndexTip: (7, 7)}), 0) == 0.0


@settings(max_examples=100)
@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3),
       st.floats(0, 2 * math.pi))
def test_thumb_index_translation_and_rotation_invariant(tx, ty, dx, dy, theta):
    base = thumb_index_distance(track_with({KP.ThumbTip: (0, 0), KP.IndexTip: (dx, dy)}), 0)
    moved = thumb_index_distance(track_with({KP.ThumbTip: (tx, ty), KP.IndexTip: (tx + dx, ty + dy)}), 0)
    c, s = math.cos(theta), math.sin(theta)
    rotated = thumb_index_distance(track_with({KP.ThumbTip: (0, 0), KP.IndexTip: (c * dx - s * dy, s * dx + c * dy)}), 0)
    assert moved == pytest.approx(base, abs=1e-9)
    assert rotated == pytest.approx(base, abs=1e-9)


def test_orientation_not_rotation_invariant():
    t = track_with({KP.IndexMCP: (50, 0), KP.PinkyMCP: (0, 0)})
    r = track_with({KP.IndexMCP: (0, 50), KP.PinkyMCP: (0, 0)})
    assert hand_orientation(t, 0) == 50.0 and hand_orientation(r, 0) == 0.0


def test_tissue_distance_examples():
    rect = BoundingBox(0, -5, 4, 5, 1.0)
    # midpoint of (9,-1) and (11,1) is (10,0)
    t = track_with({KP.ThumbTip: (9, -1), KP.IndexTip: (11, 1)})
    assert fingers_to_tissue_distance(t, 0, rect) == 6.0
    corner = track_with({KP.ThumbTip: (7, 9), KP.IndexTip: (7, 9)})
    assert fingers_to_tissue_distance(corner, 0, rect) == 5.0
    inside = track_with({KP.ThumbTip: (1, 1), KP.IndexTip: (3, -1)})
    assert fingers_to_tissue_distance(inside, 0, rect) == 0.0
    with pytest.raises(MissingTissueRegion):
        fingers_to_tissue_distance(inside, 0, None)


@settings(max_examples=100)
@given(st.floats(-300, 300), st.floats(-300, 300), st.floats(-100, 100), st.floats(-100, 100))
def test_tissue_distance_translation_invariant(tx, ty, mx, my):
    rect = BoundingBox(0, 0, 20, 10, 1.0)
    moved = BoundingBox(tx, ty, 20 + tx, 10 + ty, 1.0)
    a = fingers_to_tissue_distance(track_with({KP.ThumbTip: (mx, my), KP.IndexTip: (mx, my)}), 0, rect)
    b = fingers_to_tissue_distance(track_with({KP.ThumbTip: (mx + tx, my + ty), KP.IndexTip: (mx + tx, my + ty)}), 0, moved)
    assert b == pytest.approx(a, abs=1e-9)


def test_missing_channel():
    xs = np.zeros((21, 3))
    xs[KP.PinkyMCP] = np.nan
    with pytest.raises(MissingChannel):
        hand_orientation(make_track(xs, np.zeros((21, 3))), 0)


# -- velocity ------------------------------------------------------------------

def moving_track(step, frames=10):
    t = np.arange(frames, dtype=float)
    xs = np.tile(np.arange(21.0), (frames, 1)).T + step * t
    return make_track(xs, np.zeros_like(xs))


def test_velocity_stationary_and_uniform():
    seg = Segment(G.PullTheSuture, 0, 9)
    assert hand_velocity(moving_track(0.0), seg, 30.0) == 0.0
    assert hand_velocity(moving_track(2.0), seg, 30.0) == 60.0


def test_velocity_rotation_about_wrist():
    frames = 20
    angles = np.linspace(0, 0.5, frames)
    radii = np.arange(21.0) * 3.0
    base = np.linspace(0, math.pi / 2, 21)
    xs = 200 + radii[:, None] * np.cos(base[:, None] + angles[None, :])
    ys = 200 + radii[:, None] * np.sin(base[:, None] + angles[None, :])
    track = make_track(xs, ys)
    seg = Segment(G.PullTheSuture, 0, frames - 1)
    assert hand_velocity(track, seg, 30.0) > 0
    assert hand_velocity(track, seg, 30.0, keypoints=[KP.Wrist]) < 1e-9


def test_velocity_degenerate_segment():
    with pytest.raises(DegenerateSegment):
        hand_velocity(moving_track(1.0), Segment(G.PullTheSuture, 3, 3), 30.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(1, 120))
def test_velocity_scales_linearly(seed, scale, fps):
    rng = np.random.default_rng(seed)
    xs, ys = rng.normal(0, 20, (21, 12)), rng.normal(0, 20, (21, 12))
    seg = Segment(G.PullTheSuture, 0, 11)
    v = hand_velocity(make_track(xs, ys), seg, 30.0)
    assert hand_velocity(make_track(scale * xs, scale * ys), seg, 30.0) == pytest.approx(scale * v, rel=1e-9)
    assert hand_velocity(make_track(xs, ys), seg, fps) == pytest.approx(v * fps / 30.0, rel=1e-9)


def test_median_reducer():
    assert Reducer.Median([1, 2, 10]) == 2.0 and Reducer.Mean([1, 2, 9]) == 4.0


# -- hand selection and sample computation ------------------------------------

def tool_tracks(n, right_tool, left_tool=ToolLabel.NoTool):
    return {
        Track.ToolRight: frames_to_timeline(right_tool if isinstance(right_tool, list) else [right_tool] * n, Track.ToolRight),
        Track.ToolLeft: frames_to_timeline(left_tool if isinstance(left_tool, list) else [left_tool] * n, Track.ToolLeft),
    }


def test_select_hand_threshold_and_tie():
    seg = Segment(G.CutTheSuture, 0, 3)
    s = HandSelector(tool=ToolLabel.Scissors)
    sc, no = ToolLabel.Scissors, ToolLabel.NoTool
    assert select_hand(s, seg, {HandSide.Right: [sc, sc, no, no], HandSide.Left: [no] * 4}) is HandSide.Right
    assert select_hand(s, seg, {HandSide.Right: [no, no, no, sc], HandSide.Left: [sc, sc, sc, no]}) is HandSide.Left
    both = {HandSide.Right: [sc, sc, no, no], HandSide.Left: [no, no, sc, sc]}
    assert select_hand(s, seg, both) is HandSide.Right
    assert select_hand(s, seg, both, tie_side=HandSide.Left) is HandSide.Left
    with pytest.raises(NoHandMatchesTool):
        select_hand(s, seg, {HandSide.Right: [sc, no, no, no], HandSide.Left: [no] * 4})
    assert select_hand(HandSelector(side=HandSide.Left), seg, {}) is HandSide.Left


def bundle(gestures, right_xs, left_xs, right_tool, left_tool=ToolLabel.NoTool, tissue=None, view=CameraView.Frontal):
    n = len(gestures)
    meta = make_meta(frame_count=n, tissue=tissue, view=view)
    tracks = {HandSide.Right: make_track(right_xs, np.zeros_like(right_xs), HandSide.Right),
              HandSide.Left: make_track(left_xs, np.zeros_like(left_xs), HandSide.Left)}
    timelines = {Track.Gesture: frames_to_timeline(gestures, Track.Gesture), **tool_tracks(n, right_tool, left_tool)}
    return ProxyInput(meta, tracks, timelines)


def test_orientation_uses_scissors_hand():
    n = 6
    right, left = np.zeros((21, n)), np.zeros((21, n))
    right[KP.IndexMCP], left[KP.IndexMCP] = 30.0, -30.0
    data = bundle([G.CutTheSuture] * n, right, left, ToolLabel.Scissors)
    b = ProxyBinding(ProxyKind.HandOrientation, G.CutTheSuture, HandSelector(tool=ToolLabel.Scissors))
    [s] = compute_proxy_samples(data, [b])
    assert s.value == 30.0 and s.n_frames_used == n


def test_duration_binding_three_occurrences():
    gestures = [G.NeedlePassing] * 3 + [G.NoGesture] * 2 + [G.NeedlePassing] * 4 + [G.NoGesture] + [G.NeedlePassing]
    z = np.zeros((21, len(gestures)))
    data = bundle(gestures, z, z, ToolLabel.NoTool)
    samples = compute_proxy_samples(data, [ProxyBinding(ProxyKind.GestureDuration, G.NeedlePassing)])
    assert [s.occurrence_index for s in samples] == [0, 1, 2]
    assert [s.value for s in samples] == [3 / 30, 4 / 30, 1 / 30]


def test_background_time_is_total():
    gestures = [G.NoGesture] * 3 + [G.NeedlePassing] * 2 + [G.NoGesture] * 4
    z = np.zeros((21, len(gestures)))
    [s] = compute_proxy_samples(bundle(gestures, z, z, ToolLabel.NoTool),
                                [ProxyBinding(ProxyKind.BackgroundTime, G.NoGesture)])
    assert s.value == 7 / 30


def test_velocity_one_frame_occurrence_skipped(caplog):
    gestures = [G.NoGesture] * 2 + [G.PullTheSuture] + [G.NoGesture] * 2
    z = np.zeros((21, len(gestures)))
    b = ProxyBinding(ProxyKind.HandVelocity, G.PullTheSuture, HandSelector(tool=ToolLabel.NeedleDriver))
    with caplog.at_level(logging.INFO, logger="dexengine"):
        samples = compute_proxy_samples(bundle(gestures, z, z, ToolLabel.NeedleDriver), [b])
    assert samples == []
    assert any("skipped" in r.getMessage() and "hand_velocity" in r.getMessage() for r in caplog.records)


def test_orientation_warns_on_non_frontal_view(caplog):
    z = np.zeros((21, 4))
    data = bundle([G.CutTheSuture] * 4, z, z, ToolLabel.Scissors, view=CameraView.Closeup)
    b = ProxyBinding(ProxyKind.HandOrientation, G.CutTheSuture, HandSelector(tool=ToolLabel.Scissors))
    with caplog.at_level(logging.WARNING, logger="dexengine"):
        compute_proxy_samples(data, [b])
    assert any("frontal" in r.getMessage() for r in caplog.records)


def test_default_bindings_deterministic_and_order_independent():
    rng = np.random.default_rng(5)
    gestures = ([G.NoGesture] * 5 + [G.NeedlePassing] * 8 + [G.PullTheSuture] * 6 + [G.InstrumentalTie] * 5
                + [G.LayTheKnot] * 4 + [G.CutTheSuture] * 7 + [G.NoGesture] * 3)
    n = len(gestures)
    tools = [ToolLabel.NeedleDriver] * 28 + [ToolLabel.Scissors] * 10
    data = bundle(gestures, rng.normal(100, 10, (21, n)), rng.normal(300, 10, (21, n)), tools,
                  tissue=BoundingBox(0, 0, 50, 50, 1.0))
    bindings = load_bindings()
    a = compute_proxy_samples(data, bindings)
    b = compute_proxy_samples(data, list(reversed(bindings)))
    assert a == b and len(a) > 0
    assert samples_from_csv(samples_to_csv(a)) == a


def test_binding_validation():
    with pytest.raises(ValueError):
        ProxyBinding(ProxyKind.HandVelocity, G.PullTheSuture)
    with pytest.raises(ValueError):
        ProxyBinding(ProxyKind.BackgroundTime, G.CutTheSuture)
    with pytest.raises(ValueError):
        HandSelector(tool=ToolLabel.Scissors, side=HandSide.Left)
    for b in load_bindings():
        assert ProxyBinding.from_dict(b.to_dict()) == b
