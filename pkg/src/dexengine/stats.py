"""Group statistics and two-sided t-tests over participant-level proxy means."""
from __future__ import annotations

import csv
import enum
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyInput, InsufficientSample
from .model import GestureLabel, Group
from .proxies import ProxyKind, ProxySample

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 1000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, xc: Optional[float] = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``xc`` may carry 1 - x computed without cancellation.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(xc))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, xc) / b


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be > 0")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    t2 = t * t
    # 1 - CDF(|t|) = I_x(df/2, 1/2) / 2 with x = df / (df + t^2)
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2)))


def student_t_cdf(t: float, df: float) -> float:
    if t == 0.0:
        return 0.5
    tail = 0.5 * t_two_sided_p(t, df)
    return 1.0 - tail if t > 0 else tail


class TTestVariant(enum.Enum):
    Welch = "welch"
    Pooled = "pooled"


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    variant: TTestVariant
    note: str = ""

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if not self.degrees_of_freedom > 0:
            raise ValueError("degrees of freedom must be > 0")


def t_test_two_sided(xs: Sequence[float], ys: Sequence[float],
                     variant: TTestVariant = TTestVariant.Welch) -> TTestResult:
    """Two-sample, two-sided t-test (Welch by default, or pooled variance).

    When both samples have zero variance the statistic is undefined; equal
    means give t=0, p=1 and different means give t=+-inf, p=0, both noted.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    nx, ny = x.size, y.size
    if nx < 2 or ny < 2:
        raise InsufficientSample(f"t-test needs >= 2 values per sample, got {nx} and {ny}")
    mx, my = float(x.mean()), float(y.mean())
    vx, vy = float(x.var(ddof=1)), float(y.var(ddof=1))
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise ValueError("sample variances must be finite")
    diff = mx - my

    if vx == 0.0 and vy == 0.0:
        df = float(nx + ny - 2)
        if diff == 0.0:
            return TTestResult(0.0, df, 1.0, variant, "zero variance, equal means")
        return TTestResult(math.copysign(math.inf, diff), df, 0.0, variant, "zero variance, different means")

    if variant is TTestVariant.Pooled:
        df = float(nx + ny - 2)
        sp2 = ((nx - 1) * vx + (ny - 1) * vy) / df
        se = math.sqrt(sp2 * (1.0 / nx + 1.0 / ny))
    else:
        ax, ay = vx / nx, vy / ny
        se = math.sqrt(ax + ay)
        df = (ax + ay) ** 2 / (ax * ax / (nx - 1) + ay * ay / (ny - 1))
    t = diff / se
    return TTestResult(t, df, t_two_sided_p(t, df), variant)


def significance_stars(p: Optional[float]) -> str:
    if p is None or math.isnan(p):
        return ""
    if p < 0.005:
        return "**"
    if p < 0.05:
        return "*"
    return ""


ProxyKey = tuple[ProxyKind, GestureLabel]


def participant_means(samples: Iterable[ProxySample]) -> dict[tuple[str, ProxyKind, GestureLabel], float]:
    """Mean occurrence value per (participant, kind, gesture)."""
    acc: dict = defaultdict(list)
    for s in samples:
        acc[(s.participant_id, s.kind, s.gesture)].append(s.value)
    if not acc:
        raise EmptyInput("no proxy samples")
    return {k: math.fsum(v) / len(v) for k, v in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2].value))}


def participant_groups(samples: Iterable[ProxySample]) -> dict[str, Group]:
    groups: dict[str, Group] = {}
    for s in samples:
        prev = groups.setdefault(s.participant_id, s.group)
        if prev is not s.group:
            raise ValueError(f"participant {s.participant_id} appears in both groups")
    return groups


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    std: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    values: tuple[float, ...]

    @classmethod
    def of(cls, values: Sequence[float]) -> "GroupSummary":
        v = np.sort(np.asarray(values, dtype=float))
        q = np.percentile(v, [0, 25, 50, 75, 100])
        std = float(v.std(ddof=1)) if v.size > 1 else 0.0
        return cls(int(v.size), float(v.mean()), std, *(float(a) for a in q), tuple(float(a) for a in v))


@dataclass
class GroupStats:
    kind: ProxyKind
    gesture: GestureLabel
    groups: dict[Group, GroupSummary] = field(default_factory=dict)
    ttest: Optional[TTestResult] = None

    @property
    def stars(self) -> str:
        return significance_stars(self.ttest.p_value if self.ttest else None)


def group_stats(samples: Sequence[ProxySample], variant: TTestVariant = TTestVariant.Welch) -> list[GroupStats]:
    """Novice vs expert comparison of participant means for every (kind, gesture)."""
    means = participant_means(samples)
    groups = participant_groups(samples)
    by_key: dict = defaultdict(lambda: defaultdict(list))
    for (pid, kind, gesture), m in means.items():
        by_key[(kind, gesture)][groups[pid]].append(m)
    out = []
    for (kind, gesture) in sorted(by_key, key=lambda k: (k[0].value, k[1].value)):
        per_group = by_key[(kind, gesture)]
        gs = GroupStats(kind, gesture, {g: GroupSummary.of(v) for g, v in sorted(per_group.items(), key=lambda kv: kv[0].value)})
        nov, exp = per_group.get(Group.Novice, []), per_group.get(Group.Expert, [])
        if len(nov) >= 2 and len(exp) >= 2:
            gs.ttest = t_test_two_sided(nov, exp, variant)
        out.append(gs)
    return out


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def stats_to_csv(stats: Sequence[GroupStats]) -> str:
    """Per-(kind, gesture) rows: group summaries (box-plot quartiles) and t-test."""
    cols = ["kind", "gesture"]
    fields = ("n", "mean", "std", "minimum", "q1", "median", "q3", "maximum")
    for g in (Group.Expert, Group.Novice):
        cols += [f"{g.value}_{f}" for f in fields]
    cols += ["t", "df", "p", "variant", "stars"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for s in stats:
        row = [s.kind.value, s.gesture.value]
        for g in (Group.Expert, Group.Novice):
            summ = s.groups.get(g)
            for f in fields:
                v = getattr(summ, f) if summ else None
                row.append("" if v is None else (str(v) if f == "n" else repr(v)))
        tt = s.ttest
        row += [_num(tt and tt.t_statistic), _num(tt and tt.degrees_of_freedom), _num(tt and tt.p_value),
                tt.variant.value if tt else "", s.stars]
        w.writerow(row)
    return buf.getvalue()


def stats_to_dict(stats: Sequence[GroupStats]) -> list[dict]:
    out = []
    for s in stats:
        entry = {
            "kind": s.kind.value,
            "gesture": s.gesture.value,
            "groups": {
                g.value: {
                    "n": summ.n, "mean": summ.mean, "std": summ.std,
                    "box": [summ.minimum, summ.q1, summ.median, summ.q3, summ.maximum],
                    "participant_means": list(summ.values),
                }
                for g, summ in s.groups.items()
            },
            "ttest": None,
            "stars": s.stars,
        }
        if s.ttest:
            tt = s.ttest
            entry["ttest"] = {"t": tt.t_statistic if math.isfinite(tt.t_statistic) else str(tt.t_statistic),
                              "df": tt.degrees_of_freedom, "p": tt.p_value,
                              "variant": tt.variant.value, "note": tt.note}
        out.append(entry)
    return out


def stats_to_text(stats: Sequence[GroupStats]) -> str:
    lines = [f"{'proxy':<28}{'gesture':<18}{'expert mean':>13}{'novice mean':>13}{'t':>9}{'p':>10}"]
    for s in stats:
        e, n = s.groups.get(Group.Expert), s.groups.get(Group.Novice)
        tt = s.ttest
        lines.append(
            f"{s.kind.value:<28}{s.gesture.value:<18}"
            f"{(f'{e.mean:.3f}' if e else '-'):>13}{(f'{n.mean:.3f}' if n else '-'):>13}"
            f"{(f'{tt.t_statistic:.3f}' if tt else '-'):>9}{(f'{tt.p_value:.4f}' if tt else '-'):>10} {s.stars}"
        )
    return "\n".join(lines) + "\n"
