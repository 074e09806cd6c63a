import pytest
from hypothesis import given
from hypothesis import strategies as st

from dexengine.errors import EmptyInput, GapError, MergeError, OverlapError, UnknownLabel
from dexengine.model import (
    KP,
    BoundingBox,
    CameraView,
    GestureLabel,
    Group,
    HandSide,
    Segment,
    SegmentTimeline,
    ToolLabel,
    Track,
    frames_to_timeline,
    parse_group,
    timeline_to_frames,
)

A, B = GestureLabel.NeedlePassing, GestureLabel.PullTheSuture


def tl(*segs, track=Track.Gesture):
    return SegmentTimeline(track, tuple(Segment(*s) for s in segs))


def test_timeline_to_frames_examples():
    assert timeline_to_frames(tl((A, 0, 2), (B, 3, 4)), 5) == [A, A, A, B, B]
    assert timeline_to_frames(tl((A, 0, 0)), 1) == [A]


def test_timeline_to_frames_rejects_adjacent_same_label():
    with pytest.raises(MergeError):
        timeline_to_frames(tl((A, 0, 1), (A, 2, 3)), 4)


def test_timeline_to_frames_gap_and_overlap():
    with pytest.raises(GapError):
        timeline_to_frames(tl((A, 0, 1), (B, 3, 4)), 5)
    with pytest.raises(OverlapError):
        timeline_to_frames(tl((A, 0, 2), (B, 2, 4)), 5)
    with pytest.raises(GapError):
        timeline_to_frames(tl((A, 0, 2)), 5)


def test_frames_to_timeline_examples():
    assert frames_to_timeline([A, A, B], Track.Gesture) == tl((A, 0, 1), (B, 2, 2))
    assert frames_to_timeline([A], Track.Gesture) == tl((A, 0, 0))
    with pytest.raises(EmptyInput):
        frames_to_timeline([], Track.Gesture)


labels = st.lists(st.sampled_from(list(GestureLabel)), min_size=1, max_size=200)


@given(labels)
def test_frames_round_trip(frames):
    t = frames_to_timeline(frames, Track.Gesture)
    t.validate(len(frames))
    assert timeline_to_frames(t, len(frames)) == frames
    assert frames_to_timeline(timeline_to_frames(t, len(frames)), Track.Gesture) == t


@pytest.mark.parametrize("enum_cls", [GestureLabel, ToolLabel, HandSide, Group, CameraView, Track])
def test_enum_string_round_trip(enum_cls):
    for member in enum_cls:
        assert enum_cls.parse(member.value) is member
        assert enum_cls.parse(str(member)) is member


def test_gesture_vocabulary():
    assert [g.value for g in GestureLabel] == [
        "No Gesture", "Needle Passing", "Pull The Suture", "Instrumental Tie", "Lay The Knot", "Cut The Suture",
    ]
    assert len(HandSide) == 2


def test_tool_aliases():
    assert ToolLabel.parse("Needle Driver") is ToolLabel.NeedleDriver
    assert ToolLabel.parse("forceps-not-used") is ToolLabel.ForcepsNotUsed
    with pytest.raises(UnknownLabel):
        ToolLabel.parse("scalpel")


def test_keypoint_layout():
    values = [k.value for k in KP]
    assert sorted(values) == list(range(21))
    assert (KP.IndexMCP, KP.PinkyMCP, KP.ThumbTip, KP.IndexTip) == (5, 17, 4, 8)


def test_group_intermediate_ranks_need_table():
    with pytest.raises(UnknownLabel):
        parse_group("resident")
    assert parse_group("resident", {"Resident": "novice"}) is Group.Novice
    assert parse_group("Expert") is Group.Expert


def test_bounding_box_invariants():
    with pytest.raises(ValueError):
        BoundingBox(5, 0, 4, 1, 0.9)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 1, 1, 1.5)
