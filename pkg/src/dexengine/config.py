"""Run configuration and its on-disk JSON form."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

from .ingest import DEFAULT_BOX_CONF, atomic_write_text
from .model import HandSide
from .proxies import ProxyKind
from .signals import SmoothingConfig
from .stats import TTestVariant


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (a usage error)."""


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str = "dataset"
    output_dir: str = "out"
    bindings: Optional[str] = None
    baseline: Optional[str] = None
    templates: Optional[str] = None
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    include_background: bool = True
    ttest_variant: TTestVariant = TTestVariant.Welch
    hand_tool_threshold: float = 0.5
    tie_side: HandSide = HandSide.Right
    min_box_conf: float = DEFAULT_BOX_CONF
    thresholds: Mapping[str, float] = field(default_factory=dict)
    rank_table: Mapping[str, str] = field(default_factory=dict)

    @property
    def baseline_path(self) -> Path:
        return Path(self.baseline) if self.baseline else Path(self.output_dir) / "baseline.json"

    def proxy_thresholds(self) -> dict[ProxyKind, float]:
        return {ProxyKind(k): float(v) for k, v in self.thresholds.items()}

    def to_dict(self) -> dict:
        return {
            "dataset_root": self.dataset_root,
            "output_dir": self.output_dir,
            "bindings": self.bindings,
            "baseline": self.baseline,
            "templates": self.templates,
            "smoothing": self.smoothing.to_dict(),
            "include_background": self.include_background,
            "ttest_variant": self.ttest_variant.value,
            "hand_tool_threshold": self.hand_tool_threshold,
            "tie_side": self.tie_side.value,
            "min_box_conf": self.min_box_conf,
            "thresholds": dict(sorted(self.thresholds.items())),
            "rank_table": dict(sorted(self.rank_table.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        known = set(cls().to_dict())
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        base = cls()
        try:
            return cls(
                dataset_root=str(d.get("dataset_root", base.dataset_root)),
                output_dir=str(d.get("output_dir", base.output_dir)),
                bindings=d.get("bindings"),
                baseline=d.get("baseline"),
                templates=d.get("templates"),
                smoothing=SmoothingConfig(**d["smoothing"]) if "smoothing" in d else base.smoothing,
                include_background=bool(d.get("include_background", True)),
                ttest_variant=TTestVariant(d.get("ttest_variant", "welch")),
                hand_tool_threshold=float(d.get("hand_tool_threshold", 0.5)),
                tie_side=HandSide.parse(d.get("tie_side", "right")),
                min_box_conf=float(d.get("min_box_conf", DEFAULT_BOX_CONF)),
                thresholds={str(k): float(v) for k, v in (d.get("thresholds") or {}).items()},
                rank_table={str(k): str(v) for k, v in (d.get("rank_table") or {}).items()},
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc}") from exc

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def check_paths(self, need_baseline: bool = False) -> None:
        if not Path(self.dataset_root).is_dir():
            raise ConfigError(f"dataset root {self.dataset_root!r} is not a directory")
        for name in ("bindings", "templates"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name} file {p!r} does not exist")
        if need_baseline and not self.baseline_path.is_file():
            raise ConfigError(f"baseline file {str(self.baseline_path)!r} does not exist")
        for k in self.thresholds:
            if k not in {p.value for p in ProxyKind}:
                raise ConfigError(f"threshold for unknown proxy {k!r}")


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r}: {exc.msg}") from None


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def save_config(cfg: RunConfig, path) -> None:
    atomic_write_text(path, dumps_config(cfg))
