import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dexengine.model import HandSide, Keypoint
from dexengine.signals import (
    EdgeMode,
    SmoothingConfig,
    gate_keypoints,
    impute_locf,
    locf_fill,
    savgol_coefficients,
    savgol_smooth,
    smooth_track,
)

from conftest import hand, make_track
from oracles import savgol_weights_mp

NAN = np.nan


def frame_with_conf(make_frame, i, conf):
    h = hand()
    kps = (Keypoint(h.keypoints[0].x, h.keypoints[0].y, conf),) + h.keypoints[1:]
    return make_frame(i, right=type(h)(h.box, kps))


def test_gate_threshold_boundary(make_frame):
    frames = [frame_with_conf(make_frame, 0, 0.29), frame_with_conf(make_frame, 1, 0.30)]
    obs = gate_keypoints(frames, 0.3)[HandSide.Right]
    assert np.isnan(obs.xs[0, 0])
    assert obs.xs[0, 1] == 100.0


def test_gate_zero_threshold_keeps_everything(make_frame):
    obs = gate_keypoints([frame_with_conf(make_frame, 0, 0.0)], 0.0)[HandSide.Right]
    assert not np.isnan(obs.xs).any()


@pytest.mark.parametrize("row, expected", [
    ([5, NAN, NAN, 9], [5, 5, 5, 9]),
    ([NAN, NAN, 7], [7, 7, 7]),
    ([1, NAN, 3, NAN], [1, 1, 3, 3]),
])
def test_locf(row, expected):
    filled, observed, missing = locf_fill(np.array([row]))
    assert filled[0].tolist() == expected
    assert observed[0].tolist() == [not np.isnan(v) for v in row]
    assert not missing[0]


def test_locf_all_missing_flag():
    filled, observed, missing = locf_fill(np.array([[NAN, NAN, NAN]]))
    assert missing[0] and np.isnan(filled).all()


def test_impute_is_idempotent():
    rng = np.random.default_rng(3)
    xs = rng.normal(100, 5, (21, 30))
    xs[rng.random(xs.shape) < 0.3] = NAN
    xs[4] = NAN
    track = make_track(xs, xs * 2)
    again = impute_locf(track.as_observations())
    assert again.equals(track)
    assert track.all_missing[4] and not track.all_missing[0]


def test_savgol_moving_average():
    np.testing.assert_allclose(savgol_coefficients(5, 1), [0.2] * 5, atol=1e-15)


def test_savgol_quadratic_classic():
    np.testing.assert_allclose(savgol_coefficients(5, 2), np.array([-3, 12, 17, 12, -3]) / 35, atol=1e-15)


@pytest.mark.parametrize("window", [3, 5, 7, 9, 11, 15, 21, 25])
def test_savgol_matches_high_precision_oracle(window):
    for poly in range(1, window):
        h = (window - 1) // 2
        for offset in (0, -h, 1 - h, h):
            np.testing.assert_allclose(savgol_coefficients(window, poly, offset),
                                       savgol_weights_mp(window, poly, offset), atol=1e-12)


@pytest.mark.parametrize("window, poly", [(3, 1), (5, 2), (9, 3), (21, 7), (31, 30)])
def test_savgol_weights_sum_to_one(window, poly):
    assert abs(savgol_coefficients(window, poly).sum() - 1.0) < 1e-12


def test_savgol_rejects_bad_parameters():
    for w, p in ((4, 1), (5, 5), (1, 0), (5, 0)):
        with pytest.raises(ValueError):
            savgol_coefficients(w, p)


def test_constant_channel_unchanged():
    x = np.full(40, 123.5)
    for mode in EdgeMode:
        np.testing.assert_allclose(savgol_smooth(x, 9, 3, mode), x, atol=1e-12)


def test_cubic_interior_reproduced():
    t = np.arange(60, dtype=float)
    p = 2 * t ** 3 - t + 4
    out = savgol_smooth(p, 9, 3)
    np.testing.assert_allclose(out[4:-4], p[4:-4], rtol=0, atol=1e-9)


def test_shrink_mode_exact_at_edges():
    t = np.arange(30, dtype=float) / 10
    p = 3 * t ** 2 - t + 1
    np.testing.assert_allclose(savgol_smooth(p, 7, 2, EdgeMode.Shrink), p, atol=1e-9)


def test_single_frame_unchanged():
    track = make_track(np.full((21, 1), 3.0))
    out = smooth_track(track, SmoothingConfig())
    np.testing.assert_array_equal(out.xs, track.xs)


def test_short_signal_uses_shrunken_window():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(savgol_smooth(x, 9, 3), x, atol=1e-12)


def test_smooth_track_keeps_flags_and_missing_channels():
    rng = np.random.default_rng(0)
    xs = rng.normal(0, 1, (21, 50))
    xs[7] = NAN
    track = make_track(xs, xs)
    out = smooth_track(track, SmoothingConfig(window=7, poly_order=2))
    assert np.isnan(out.xs[7]).all()
    np.testing.assert_array_equal(out.valid, track.valid)
    assert np.isfinite(np.delete(out.xs, 7, axis=0)).all()


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=12, max_size=40), st.floats(-5, 5), st.floats(-5, 5),
       st.sampled_from([(5, 2), (7, 3), (9, 3), (11, 4)]), st.sampled_from(list(EdgeMode)))
def test_smoothing_is_linear(values, a, b, wp, mode):
    s1 = np.array(values)
    s2 = np.sin(np.arange(len(values)))
    w, p = wp
    lhs = savgol_smooth(a * s1 + b * s2, w, p, mode)
    rhs = a * savgol_smooth(s1, w, p, mode) + b * savgol_smooth(s2, w, p, mode)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=1, max_size=40), st.sampled_from(list(EdgeMode)))
def test_smoothing_finite_in_finite_out(values, mode):
    assert np.isfinite(savgol_smooth(np.array(values), 9, 3, mode)).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12).map(lambda h: 2 * h + 1), st.data())
def test_polynomial_exactness(window, data):
    poly = data.draw(st.integers(1, window - 1))
    coeffs = data.draw(st.lists(st.floats(-100, 100), min_size=poly + 1, max_size=poly + 1))
    n = window + 15
    t = (np.arange(n) - n / 2) / (n / 2)
    x = np.polynomial.polynomial.polyval(t, coeffs) + 200.0
    h = (window - 1) // 2
    out = savgol_smooth(x, window, poly)
    np.testing.assert_allclose(out[h:n - h], x[h:n - h], rtol=0, atol=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        SmoothingConfig(window=8)
    with pytest.raises(ValueError):
        SmoothingConfig(window=5, poly_order=5)
    assert SmoothingConfig(edge_mode="shrink").edge_mode is EdgeMode.Shrink
