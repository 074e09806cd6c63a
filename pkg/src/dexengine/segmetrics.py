"""Frame accuracy, segmental edit score and segmental F1@tau for label tracks."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import EmptyInput, LengthMismatch, TrackMismatch
from .model import Segment, SegmentTimeline, Track, timeline_to_frames

DEFAULT_TAUS = (0.10, 0.25, 0.50)


def frame_accuracy(pred: Sequence, gt: Sequence) -> float:
    if len(pred) != len(gt):
        raise LengthMismatch(f"prediction has {len(pred)} frames, ground truth {len(gt)}")
    if not gt:
        raise EmptyInput("no frames to score")
    correct = sum(1 for p, g in zip(pred, gt) if p == g)
    return 100.0 * correct / len(gt)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance, two-row dynamic programme."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def _segments(t: SegmentTimeline, include_background: bool) -> list[Segment]:
    if include_background:
        return list(t.segments)
    bg = t.track.background
    return [s for s in t.segments if s.label != bg]


def edit_score(pred: SegmentTimeline, gt: SegmentTimeline, include_background: bool = True) -> float:
    if not pred.segments or not gt.segments:
        raise EmptyInput("edit score needs non-empty timelines")
    p = [s.label for s in _segments(pred, include_background)]
    g = [s.label for s in _segments(gt, include_background)]
    longest = max(len(p), len(g))
    if longest == 0:
        return 100.0
    return max(0.0, 100.0 * (1.0 - levenshtein(p, g) / longest))


def iou(a: Segment, b: Segment) -> float:
    inter = min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1
    if inter <= 0:
        return 0.0
    return inter / (a.length + b.length - inter)


@dataclass(frozen=True)
class F1Result:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 100.0 if self.fn == 0 else 0.0
        return 100.0 * self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 100.0 if self.fp == 0 else 0.0
        return 100.0 * self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def match_segments(pred: Sequence[Segment], gt: Sequence[Segment], tau: float) -> F1Result:
    """Greedy matching: each prediction, in order, takes the unmatched same-label
    ground-truth segment of highest IoU; a hit needs IoU >= tau."""
    used = [False] * len(gt)
    tp = fp = 0
    for p in pred:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gt):
            if used[j] or g.label != p.label:
                continue
            v = iou(p, g)
            if v > best_iou:
                best, best_iou = j, v
        if best >= 0 and best_iou >= tau:
            used[best] = True
            tp += 1
        else:
            fp += 1
    return F1Result(tp, fp, len(gt) - tp)


def f1_at(pred: SegmentTimeline, gt: SegmentTimeline, tau: float, include_background: bool = True) -> F1Result:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    return match_segments(_segments(pred, include_background), _segments(gt, include_background), tau)


@dataclass
class SegEvalResult:
    accuracy: float
    edit: float
    f1: dict[float, F1Result]
    per_class: dict[str, float] = field(default_factory=dict)

    def row(self) -> dict[str, float]:
        out = {"accuracy": self.accuracy, "edit": self.edit}
        for tau, r in sorted(self.f1.items()):
            out[f"f1@{tau:.2f}"] = r.f1
        return out


def evaluate_track(pred: SegmentTimeline, gt: SegmentTimeline, include_background: bool = True,
                   taus: Iterable[float] = DEFAULT_TAUS) -> SegEvalResult:
    n = gt.frame_count
    if pred.frame_count != n:
        raise LengthMismatch(f"{gt.track.value}: prediction covers {pred.frame_count} frames, ground truth {n}")
    pf = timeline_to_frames(pred, n)
    gf = timeline_to_frames(gt, n)
    per_class = {}
    for label in sorted({s.label for s in gt.segments}, key=lambda l: l.value):
        idx = [i for i, g in enumerate(gf) if g == label]
        per_class[label.value] = 100.0 * sum(pf[i] == label for i in idx) / len(idx)
    return SegEvalResult(
        accuracy=frame_accuracy(pf, gf),
        edit=edit_score(pred, gt, include_background),
        f1={tau: f1_at(pred, gt, tau, include_background) for tau in taus},
        per_class=per_class,
    )


def evaluate_multitask(preds: Mapping[Track, SegmentTimeline], gts: Mapping[Track, SegmentTimeline],
                       include_background: bool = True,
                       taus: Iterable[float] = DEFAULT_TAUS) -> dict[Track, SegEvalResult]:
    if set(preds) != set(gts):
        missing = sorted(t.value for t in set(preds) ^ set(gts))
        raise TrackMismatch(f"track sets differ: {', '.join(missing)}")
    taus = tuple(taus)
    return {
        track: evaluate_track(preds[track], gts[track], include_background, taus)
        for track in sorted(gts, key=lambda t: t.value)
    }


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else float("nan")
    return mean, std


METRIC_COLUMNS = ("accuracy", "edit", "f1@0.10", "f1@0.25", "f1@0.50")


@dataclass
class EvaluationReport:
    """Per-recording rows plus mean and std summaries, per track."""

    rows: list[dict] = field(default_factory=list)

    def add(self, recording_id: str, results: Mapping[Track, SegEvalResult], fold: Optional[int] = None) -> None:
        for track, res in results.items():
            self.rows.append({"recording_id": recording_id, "fold": fold, "track": track.value, **res.row()})

    def columns(self) -> list[str]:
        cols = []
        for r in self.rows:
            for k in r:
                if k not in ("recording_id", "fold", "track") and k not in cols:
                    cols.append(k)
        return cols

    def summary(self) -> list[dict]:
        """mean/std over recordings, and over fold means when folds are known."""
        out = []
        for track in sorted({r["track"] for r in self.rows}):
            rows = sorted((r for r in self.rows if r["track"] == track), key=lambda r: r["recording_id"])
            entry_mean = {"track": track, "aggregate": "mean_over_recordings", "n": len(rows)}
            entry_std = {"track": track, "aggregate": "std_over_recordings", "n": len(rows)}
            for c in self.columns():
                entry_mean[c], entry_std[c] = _mean_std([r[c] for r in rows])
            out += [entry_mean, entry_std]
            folds = sorted({r["fold"] for r in rows if r["fold"] is not None})
            if folds and all(r["fold"] is not None for r in rows):
                entry_mean = {"track": track, "aggregate": "mean_over_folds", "n": len(folds)}
                entry_std = {"track": track, "aggregate": "std_over_folds", "n": len(folds)}
                for c in self.columns():
                    fold_means = [_mean_std([r[c] for r in rows if r["fold"] == f])[0] for f in folds]
                    entry_mean[c], entry_std[c] = _mean_std(fold_means)
                out += [entry_mean, entry_std]
        return out

    def to_csv(self) -> str:
        cols = self.columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["recording_id", "fold", "track", *cols])
        for r in sorted(self.rows, key=lambda r: (r["track"], r["recording_id"])):
            w.writerow([r["recording_id"], "" if r["fold"] is None else r["fold"], r["track"],
                        *(_fmt(r[c]) for c in cols)])
        for s in self.summary():
            w.writerow([s["aggregate"], "", s["track"], *(_fmt(s[c]) for c in cols)])
        return buf.getvalue()

    def to_text(self) -> str:
        cols = self.columns()
        lines = []
        for track in sorted({r["track"] for r in self.rows}):
            summ = {s["aggregate"]: s for s in self.summary() if s["track"] == track}
            m, s = summ["mean_over_recordings"], summ["std_over_recordings"]
            lines.append(f"[{track}] n={m['n']}")
            lines.append("  " + "  ".join(f"{c}={m[c]:.2f}" + (f"±{s[c]:.2f}" if c == "accuracy" and not math.isnan(s[c]) else "")
                                          for c in cols))
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.4f}"
