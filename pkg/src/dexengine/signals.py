"""Keypoint confidence gating, LOCF imputation and Savitzky-Golay smoothing."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateFit
from .model import (
    NUM_KEYPOINTS,
    BoundingBox,
    DetectionFrame,
    HandDetection,
    HandSide,
    Keypoint,
    RecordingMeta,
)

DEFAULT_KP_THRESHOLD = 0.3


class EdgeMode(enum.Enum):
    Mirror = "mirror"
    Shrink = "shrink"


@dataclass(frozen=True)
class SmoothingConfig:
    window: int = 9
    poly_order: int = 3
    keypoint_conf_threshold: float = DEFAULT_KP_THRESHOLD
    edge_mode: EdgeMode = EdgeMode.Mirror

    def __post_init__(self):
        if isinstance(self.edge_mode, str):
            object.__setattr__(self, "edge_mode", EdgeMode(self.edge_mode.lower()))
        _check_window(self.window, self.poly_order)
        if not 0.0 <= self.keypoint_conf_threshold <= 1.0:
            raise ValueError("keypoint_conf_threshold must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "poly_order": self.poly_order,
            "keypoint_conf_threshold": self.keypoint_conf_threshold,
            "edge_mode": self.edge_mode.value,
        }


def _check_window(window: int, poly_order: int) -> None:
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    if not 1 <= poly_order < window:
        raise ValueError(f"poly_order must satisfy 1 <= poly_order < window, got {poly_order}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HandObservations:
    """Gated per-frame observations of one hand; NaN marks a missing sample.

    ``xs``/``ys`` have shape (21, T); ``box_center`` has shape (2, T).
    """

    side: HandSide
    xs: np.ndarray
    ys: np.ndarray
    box_center: np.ndarray

    @property
    def frame_count(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True, eq=False)
class HandTrack:
    side: HandSide
    xs: np.ndarray
    ys: np.ndarray
    valid: np.ndarray
    all_missing: np.ndarray
    box_center: np.ndarray
    box_valid: np.ndarray
    meta: Optional[RecordingMeta] = None

    @property
    def frame_count(self) -> int:
        return self.xs.shape[1]

    @property
    def detected(self) -> bool:
        return not bool(self.all_missing.all())

    def point(self, kp: int, frame: int) -> tuple[float, float]:
        return float(self.xs[kp, frame]), float(self.ys[kp, frame])

    def as_observations(self) -> HandObservations:
        """Inverse view: observed samples where ``valid``, NaN elsewhere."""
        xs = np.where(self.valid, self.xs, np.nan)
        ys = np.where(self.valid, self.ys, np.nan)
        bc = np.where(self.box_valid[None, :], self.box_center, np.nan)
        return HandObservations(self.side, xs, ys, bc)

    def equals(self, other: "HandTrack") -> bool:
        return (
            self.side == other.side
            and np.array_equal(self.xs, other.xs, equal_nan=True)
            and np.array_equal(self.ys, other.ys, equal_nan=True)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.all_missing, other.all_missing)
            and np.array_equal(self.box_center, other.box_center, equal_nan=True)
            and np.array_equal(self.box_valid, other.box_valid)
        )


def gate_keypoints(frames: Sequence[DetectionFrame], threshold: float = DEFAULT_KP_THRESHOLD,
                   frame_count: Optional[int] = None) -> dict[HandSide, HandObservations]:
    """Drop keypoints with confidence below ``threshold`` (kept iff conf >= threshold)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    if frame_count is None:
        frame_count = max((f.frame_index for f in frames), default=-1) + 1
    out = {}
    for side in HandSide:
        xs = np.full((NUM_KEYPOINTS, frame_count), np.nan)
        ys = np.full((NUM_KEYPOINTS, frame_count), np.nan)
        bc = np.full((2, frame_count), np.nan)
        for f in frames:
            det = f.hands.get(side)
            if det is None or f.frame_index >= frame_count:
                continue
            t = f.frame_index
            bc[:, t] = det.box.center
            for k, kp in enumerate(det.keypoints):
                if kp.confidence >= threshold:
                    xs[k, t] = kp.x
                    ys[k, t] = kp.y
        out[side] = HandObservations(side, xs, ys, bc)
    return out


def locf_fill(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise LOCF over a 2-D array with NaN gaps.

    Leading gaps take the first observation. Returns (filled, observed, all_missing);
    rows without any observation stay NaN.
    """
    values = np.asarray(values, dtype=float)
    observed = ~np.isnan(values)
    n_rows, n = values.shape
    if n == 0:
        return values.copy(), observed, np.ones(n_rows, dtype=bool)
    idx = np.where(observed, np.arange(n)[None, :], -1)
    np.maximum.accumulate(idx, axis=1, out=idx)
    all_missing = ~observed.any(axis=1)
    first = np.argmax(observed, axis=1)
    idx = np.where(idx < 0, first[:, None], idx)
    filled = np.take_along_axis(values, idx, axis=1)
    filled[all_missing] = np.nan
    return filled, observed, all_missing


def impute_locf(obs: HandObservations, meta: Optional[RecordingMeta] = None) -> HandTrack:
    xs, valid_x, miss_x = locf_fill(obs.xs)
    ys, valid_y, miss_y = locf_fill(obs.ys)
    bc, bvalid, _ = locf_fill(obs.box_center)
    return HandTrack(
        side=obs.side,
        xs=_freeze(xs),
        ys=_freeze(ys),
        valid=_freeze(valid_x & valid_y),
        all_missing=_freeze(miss_x | miss_y),
        box_center=_freeze(bc),
        box_valid=_freeze(bvalid.all(axis=0)),
        meta=meta,
    )


def _solve_exact(matrix: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            raise DegenerateFit("singular normal equations")
        a[col], a[pivot] = a[pivot], a[col]
        p = a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] / p
            if f:
                for c in range(col, n + 1):
                    a[r][c] -= f * a[col][c]
    sol = [Fraction(0)] * n
    for r in range(n - 1, -1, -1):
        s = a[r][n] - sum(a[r][c] * sol[c] for c in range(r + 1, n))
        sol[r] = s / a[r][r]
    return sol


@lru_cache(maxsize=256)
def _savgol_exact(window: int, poly_order: int, offset: int) -> tuple[Fraction, ...]:
    h = (window - 1) // 2
    positions = range(-h, h + 1)
    m = poly_order + 1
    # Gram matrix of the Vandermonde system: sum_t t^(i+j), exact integers.
    power_sums = [sum(t ** k for t in positions) for k in range(2 * m - 1)]
    gram = [[Fraction(power_sums[i + j]) for j in range(m)] for i in range(m)]
    target = [Fraction(offset) ** k for k in range(m)]
    coef = _solve_exact(gram, target)
    return tuple(sum(coef[k] * Fraction(t) ** k for k in range(m)) for t in positions)


def savgol_coefficients(window: int, poly_order: int, offset: int = 0) -> np.ndarray:
    """Least-squares polynomial smoothing weights for positions -h..h.

    ``offset`` selects the evaluation position relative to the window centre
    (0 is the centre). The weights are applied as ``np.dot(weights, x[i-h:i+h+1])``.
    Normal equations are solved in exact rational arithmetic, then rounded.
    """
    _check_window(window, poly_order)
    h = (window - 1) // 2
    if not -h <= offset <= h:
        raise ValueError(f"offset must lie in [-{h}, {h}]")
    return np.array([float(w) for w in _savgol_exact(window, poly_order, offset)])


def _effective(window: int, poly_order: int, n: int) -> tuple[int, int]:
    if n >= window:
        return window, poly_order
    w = n if n % 2 else n - 1
    return w, min(poly_order, w - 1)


def savgol_smooth(x: np.ndarray, window: int, poly_order: int,
                  edge_mode: EdgeMode = EdgeMode.Mirror) -> np.ndarray:
    """Smooth a 1-D finite signal. Signals shorter than the window use a shrunken window."""
    x = np.asarray(x, dtype=float)
    n = x.size
    w, p = _effective(window, poly_order, n)
    if w < 3 or p < 1:
        return x.copy()
    h = (w - 1) // 2
    weights = savgol_coefficients(w, p)
    if edge_mode is EdgeMode.Mirror:
        return np.correlate(np.pad(x, h, mode="reflect"), weights, mode="valid")
    out = np.empty_like(x)
    out[h:n - h] = np.correlate(x, weights, mode="valid")
    head, tail = x[:w], x[n - w:]
    for i in range(h):
        out[i] = np.dot(savgol_coefficients(w, p, i - h), head)
        out[n - 1 - i] = np.dot(savgol_coefficients(w, p, h - i), tail)
    return out


def _smooth_rows(a: np.ndarray, skip: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    out = a.copy()
    for r in range(a.shape[0]):
        if not skip[r]:
            out[r] = savgol_smooth(a[r], cfg.window, cfg.poly_order, cfg.edge_mode)
    return out


def smooth_track(track: HandTrack, cfg: SmoothingConfig = SmoothingConfig()) -> HandTrack:
    """Smooth every keypoint coordinate and the box centre independently."""
    box_missing = np.isnan(track.box_center).any(axis=1)
    return replace(
        track,
        xs=_freeze(_smooth_rows(track.xs, track.all_missing, cfg)),
        ys=_freeze(_smooth_rows(track.ys, track.all_missing, cfg)),
        box_center=_freeze(_smooth_rows(track.box_center, box_missing, cfg)),
    )


def build_tracks(frames: Sequence[DetectionFrame], meta: RecordingMeta,
                 cfg: SmoothingConfig = SmoothingConfig()) -> dict[HandSide, HandTrack]:
    """Gate, impute and smooth both hands of one recording."""
    obs = gate_keypoints(frames, cfg.keypoint_conf_threshold, meta.frame_count)
    return {side: smooth_track(impute_locf(o, meta), cfg) for side, o in obs.items()}


def tracks_to_frames(frames: Sequence[DetectionFrame], tracks: Mapping[HandSide, HandTrack]) -> list[DetectionFrame]:
    """Write smoothed coordinates back into the frames where each hand was detected.

    Keypoint confidences are kept; boxes are translated to the smoothed centre.
    Tool detections pass through unchanged.
    """
    out = []
    for f in frames:
        hands = {}
        for side, det in f.hands.items():
            tr = tracks.get(side)
            t = f.frame_index
            if tr is None or t >= tr.frame_count:
                hands[side] = det
                continue
            kps = []
            for k, kp in enumerate(det.keypoints):
                if tr.all_missing[k]:
                    kps.append(kp)
                else:
                    kps.append(Keypoint(float(tr.xs[k, t]), float(tr.ys[k, t]), kp.confidence))
            cx, cy = det.box.center
            dx = float(tr.box_center[0, t]) - cx
            dy = float(tr.box_center[1, t]) - cy
            b = det.box
            box = BoundingBox(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy, b.confidence)
            hands[side] = HandDetection(box, tuple(kps))
        out.append(DetectionFrame(f.frame_index, hands, dict(f.tools)))
    return out
