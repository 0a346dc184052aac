"""Run configuration: one JSON document drives a whole pipeline run."""

from __future__ import annotations

import json
import os
import pathlib
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

from momentum_workbench.backtest import FilterConfig
from momentum_workbench.market_data import SyntheticSpec
from momentum_workbench.predictor import PREDICTOR_KINDS, TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration (a usage error)."""


@dataclass(frozen=True)
class DataSource:
    csv_dir: str | None = None
    synthetic: SyntheticSpec | None = None

    def __post_init__(self):
        if (self.csv_dir is None) == (self.synthetic is None):
            raise ConfigError("data_source needs exactly one of 'csv_dir' or 'synthetic'")

    def to_dict(self) -> dict:
        if self.csv_dir is not None:
            return {"csv_dir": self.csv_dir}
        return {"synthetic": self.synthetic.to_dict()}


def _default_source():
    return DataSource(synthetic=SyntheticSpec())


@dataclass(frozen=True)
class RunConfig:
    data_source: DataSource = field(default_factory=_default_source)
    train_size: int = 240
    horizon: int = 10
    window_len: int = 10
    lstm: TrainConfig = field(default_factory=TrainConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    equity_initial: float = 1_000_000.0
    commission_rate: float = 0.0001
    group_len: int = 84
    output_dir: str = "run"
    seed: int = 0
    predictor: str = "lstm"
    workers: int | None = None
    correlation_threshold: float = 0.7
    horizon_decay: bool = True
    horizon_decay_days: int = 40
    label_study: bool = False

    def __post_init__(self):
        if self.predictor not in PREDICTOR_KINDS:
            raise ConfigError(f"predictor must be one of {PREDICTOR_KINDS}")
        for name in ("train_size", "horizon", "window_len", "group_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.equity_initial > 0:
            raise ConfigError("equity_initial must be positive")
        if self.commission_rate < 0:
            raise ConfigError("commission_rate must be non-negative")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: str | os.PathLike | None = None) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            if "data_source" in data:
                data["data_source"] = _parse_source(data["data_source"], base_dir)
            if "lstm" in data:
                data["lstm"] = TrainConfig.from_dict(data["lstm"])
            if "filter" in data:
                data["filter"] = FilterConfig.from_dict(data["filter"])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = pathlib.Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["data_source"] = self.data_source.to_dict()
        d["lstm"] = self.lstm.to_dict()
        d["filter"] = self.filter.to_dict()
        return d

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def _parse_source(raw, base_dir):
    if isinstance(raw, DataSource):
        return raw
    if not isinstance(raw, Mapping) or len(raw) != 1:
        raise ConfigError("data_source must be {'csv_dir': path} or {'synthetic': {...}}")
    (kind, value), = raw.items()
    if kind == "csv_dir":
        p = pathlib.Path(value)
        if base_dir is not None and not p.is_absolute():
            p = pathlib.Path(base_dir) / p
        return DataSource(csv_dir=str(p))
    if kind == "synthetic":
        spec = value if isinstance(value, SyntheticSpec) else SyntheticSpec.from_dict(value or {})
        return DataSource(synthetic=spec)
    raise ConfigError(f"unknown data_source kind {kind!r}")
