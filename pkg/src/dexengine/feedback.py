"""Expert baseline persistence and per-proxy feedback for a new recording."""
from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InsufficientExperts
from .ingest import atomic_write_text
from .model import GestureLabel, Group
from .proxies import ProxyKind, ProxySample
from .stats import participant_means

log = logging.getLogger(__name__)

BASELINE_FORMAT = "dexengine-baseline"
BASELINE_VERSION = "1"
DEFAULT_THRESHOLD_K = 2.0


@dataclass(frozen=True)
class BaselineEntry:
    kind: ProxyKind
    gesture: GestureLabel
    mean: float
    std: float
    n: int
    threshold_k: float = DEFAULT_THRESHOLD_K

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be >= 0")
        if not self.threshold_k > 0:
            raise ValueError("threshold_k must be > 0")


@dataclass(frozen=True)
class ExpertBaseline:
    entries: Mapping[tuple[ProxyKind, GestureLabel], BaselineEntry]
    created_from: tuple[str, ...] = ()
    version: str = BASELINE_VERSION

    def get(self, kind: ProxyKind, gesture: GestureLabel) -> Optional[BaselineEntry]:
        return self.entries.get((kind, gesture))

    def to_dict(self) -> dict:
        return {
            "format": BASELINE_FORMAT,
            "version": self.version,
            "created_from": list(self.created_from),
            "entries": [
                {"kind": e.kind.value, "gesture": e.gesture.value, "mean": e.mean, "std": e.std,
                 "n": e.n, "threshold_k": e.threshold_k}
                for _, e in sorted(self.entries.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExpertBaseline":
        if d.get("format") != BASELINE_FORMAT:
            raise ValueError(f"not a baseline document (format={d.get('format')!r})")
        entries = {}
        for e in d["entries"]:
            entry = BaselineEntry(ProxyKind(e["kind"]), GestureLabel.parse(e["gesture"]), float(e["mean"]),
                                  float(e["std"]), int(e["n"]), float(e["threshold_k"]))
            entries[(entry.kind, entry.gesture)] = entry
        return cls(entries, tuple(d.get("created_from", ())), str(d["version"]))


def dumps_baseline(baseline: ExpertBaseline) -> str:
    return json.dumps(baseline.to_dict(), indent=2) + "\n"


def save_baseline(baseline: ExpertBaseline, path) -> None:
    atomic_write_text(path, dumps_baseline(baseline))


def load_baseline(path) -> ExpertBaseline:
    with open(path, encoding="utf-8") as fh:
        return ExpertBaseline.from_dict(json.load(fh))


def build_baseline(samples: Sequence[ProxySample], thresholds: Optional[Mapping[ProxyKind, float]] = None,
                   min_experts: int = 2) -> ExpertBaseline:
    """Mean and sample std (n-1) of expert participant means per (kind, gesture)."""
    thresholds = dict(thresholds or {})
    experts = [s for s in samples if s.group is Group.Expert]
    if not experts:
        raise InsufficientExperts("no expert samples")
    per_key = defaultdict(list)
    for (pid, kind, gesture), m in participant_means(experts).items():
        per_key[(kind, gesture)].append(m)
    entries = {}
    for key in sorted(per_key, key=lambda k: (k[0].value, k[1].value)):
        values = per_key[key]
        if len(values) < min_experts:
            log.warning("baseline: %s/%s has %d expert(s), need %d; entry omitted",
                        key[0].value, key[1].value, len(values), min_experts)
            continue
        v = np.asarray(values)
        entries[key] = BaselineEntry(key[0], key[1], float(v.mean()), float(v.std(ddof=1)), len(values),
                                     float(thresholds.get(key[0], DEFAULT_THRESHOLD_K)))
    if not entries:
        raise InsufficientExperts(f"no (proxy, gesture) pair has >= {min_experts} expert participants")
    created = tuple(sorted({s.recording_id for s in experts}))
    return ExpertBaseline(entries, created)


@dataclass(frozen=True)
class MessageTemplates:
    """Advice strings keyed by (kind, gesture, direction); gesture "*" matches any."""

    table: Mapping[tuple[str, str, str], str]

    @classmethod
    def load(cls, path=None) -> "MessageTemplates":
        if path is None:
            text = resources.files("dexengine").joinpath("data/feedback_templates.json").read_text(encoding="utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        table = {}
        for t in json.loads(text)["templates"]:
            gesture = t["gesture"] if t["gesture"] == "*" else GestureLabel.parse(t["gesture"]).value
            table[(ProxyKind(t["kind"]).value, gesture, t["direction"].lower())] = t["message"]
        return cls(table)

    def message(self, kind: ProxyKind, gesture: GestureLabel, direction: str) -> str:
        d = direction.lower()
        text = self.table.get((kind.value, gesture.value, d)) or self.table.get((kind.value, "*", d))
        if text is None:
            text = "{proxy} during {gesture} is {direction} than the expert range."
        return text.format(proxy=kind.value.replace("_", " ").capitalize(), gesture=gesture.value,
                           direction="higher" if d == "high" else "lower")


@dataclass(frozen=True)
class FeedbackEntry:
    kind: ProxyKind
    gesture: GestureLabel
    subject_value: float
    expert_mean: float
    expert_std: float
    z_score: Optional[float]
    threshold_k: float
    triggered: bool
    direction: str
    message: str
    unscorable: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value, "gesture": self.gesture.value, "subject_value": self.subject_value,
            "expert_mean": self.expert_mean, "expert_std": self.expert_std, "z_score": self.z_score,
            "threshold_k": self.threshold_k, "triggered": self.triggered, "direction": self.direction,
            "message": self.message, "unscorable": self.unscorable,
        }


@dataclass
class FeedbackReport:
    recording_id: str
    entries: list[FeedbackEntry] = field(default_factory=list)

    @property
    def triggered(self) -> list[FeedbackEntry]:
        return [e for e in self.entries if e.triggered]

    def to_dict(self) -> dict:
        return {"recording_id": self.recording_id, "entries": [e.to_dict() for e in self.entries]}

    def to_text(self) -> str:
        lines = [f"Feedback for {self.recording_id}", ""]
        if self.triggered:
            lines.append("Suggestions:")
            lines += [f"  - {e.message}" for e in self.triggered]
        else:
            lines.append("All scored proxies are within the expert range.")
        lines += ["", "Details:"]
        for e in self.entries:
            z = "n/a" if e.z_score is None else f"{e.z_score:+.2f}"
            flag = "TRIGGERED" if e.triggered else ("unscorable" if e.unscorable else "ok")
            lines.append(f"  {e.kind.value:<28}{e.gesture.value:<18} value={e.subject_value:.3f} "
                         f"expert={e.expert_mean:.3f}±{e.expert_std:.3f} z={z} [{flag}]")
        return "\n".join(lines) + "\n"


def generate_feedback(samples: Sequence[ProxySample], baseline: ExpertBaseline,
                      templates: Optional[MessageTemplates] = None,
                      recording_id: Optional[str] = None) -> FeedbackReport:
    """Compare the subject's mean proxy values with the expert baseline."""
    templates = templates or MessageTemplates.load()
    if recording_id is None:
        ids = sorted({s.recording_id for s in samples})
        recording_id = ids[0] if len(ids) == 1 else ",".join(ids)
    values = defaultdict(list)
    for s in samples:
        values[(s.kind, s.gesture)].append(s.value)
    report = FeedbackReport(recording_id)
    for key in sorted(values, key=lambda k: (k[0].value, k[1].value)):
        entry = baseline.get(*key)
        if entry is None:
            log.info("feedback: no baseline for %s/%s; skipped", key[0].value, key[1].value)
            continue
        subject = math.fsum(values[key]) / len(values[key])
        if entry.std == 0:
            report.entries.append(FeedbackEntry(key[0], key[1], subject, entry.mean, entry.std, None,
                                                entry.threshold_k, False, "", "Unscorable: expert spread is zero.",
                                                unscorable=True))
            continue
        z = (subject - entry.mean) / entry.std
        triggered = abs(z) > entry.threshold_k
        direction = "high" if z > 0 else "low"
        message = templates.message(key[0], key[1], direction) if triggered else "Within the expert range."
        report.entries.append(FeedbackEntry(key[0], key[1], subject, entry.mean, entry.std, z,
                                            entry.threshold_k, triggered, direction, message))
    return report
