"""Supervised windows, train-only standardisation and walk-forward folds."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from momentum_workbench.features import N_FEATURES, FeatureFrame

WINDOW_LEN = 10
TRAIN_SIZE = 240
HORIZON = 10


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    """Window of features ending on day ``end_index`` and the label ``m[end_index + 1]``."""

    ticker: str
    end_index: int
    window: np.ndarray
    label: float
    end_date: dt.date | None = None


def build_samples(frame: FeatureFrame, momentum: Sequence[float],
                  window_len: int = WINDOW_LEN) -> list[Sample]:
    """One sample per day whose trailing window is fully defined and whose
    next-day label exists. ``momentum`` may be any label sequence aligned to
    the frame's dates (return momentum by default in the pipeline)."""
    labels = np.asarray(momentum, dtype=np.float64)
    if len(labels) != len(frame):
        raise ValueError("label sequence and frame have different lengths")
    n = len(frame)
    csum = np.concatenate([[0], np.cumsum(frame.defined)])
    out = []
    for t in range(window_len - 1, n - 1):
        if csum[t + 1] - csum[t + 1 - window_len] != window_len:
            continue
        y = labels[t + 1]
        if not np.isfinite(y):
            continue
        win = frame.values[t - window_len + 1:t + 1].copy()
        win.setflags(write=False)
        out.append(Sample(frame.ticker, t, win, float(y), frame.dates[t]))
    return out


def stack_windows(samples: Sequence[Sample]) -> np.ndarray:
    if not samples:
        return np.empty((0, WINDOW_LEN, N_FEATURES))
    return np.stack([s.window for s in samples])


def stack_labels(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.float64)


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray
    degenerate: np.ndarray

    def transform(self, windows: np.ndarray) -> np.ndarray:
        return (np.asarray(windows, dtype=np.float64) - self.mean) / self.scale

    def inverse_transform(self, windows: np.ndarray) -> np.ndarray:
        return np.asarray(windows, dtype=np.float64) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": [float(x) for x in self.mean],
            "scale": [float(x) for x in self.scale],
            "degenerate": [bool(x) for x in self.degenerate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["scale"], dtype=np.float64),
                   np.array(d["degenerate"], dtype=bool))

    @classmethod
    def identity(cls, n_features: int = N_FEATURES) -> "Scaler":
        return cls(np.zeros(n_features), np.ones(n_features), np.zeros(n_features, dtype=bool))


def fit_scaler(train_samples: Sequence[Sample]) -> Scaler:
    """Per-column mean and population std over every window cell.

    Zero-variance columns get scale 1 and are flagged degenerate.
    """
    if not train_samples:
        raise ValueError("cannot fit a scaler on an empty training set")
    cells = stack_windows(train_samples).reshape(-1, train_samples[0].window.shape[-1])
    mean = cells.mean(axis=0)
    std = cells.std(axis=0)
    degenerate = ~(std > 0)
    scale = np.where(degenerate, 1.0, std)
    return Scaler(mean, scale, degenerate)


def apply_scaler(sample: Sample, scaler: Scaler) -> Sample:
    """Standardise the window; the label stays in raw units."""
    win = scaler.transform(sample.window)
    win.setflags(write=False)
    return replace(sample, window=win)


@dataclass
class Dataset:
    samples: list[Sample]
    scaler: Scaler

    def __len__(self):
        return len(self.samples)

    @classmethod
    def fit(cls, train_samples: Sequence[Sample]) -> "Dataset":
        """Fit a scaler on ``train_samples`` and return them standardised."""
        scaler = fit_scaler(train_samples)
        return cls([apply_scaler(s, scaler) for s in train_samples], scaler)

    @property
    def windows(self) -> np.ndarray:
        return stack_windows(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return stack_labels(self.samples)


@dataclass(frozen=True)
class Fold:
    """Half-open index ranges into a ticker's ordered sample list."""

    index: int
    train_start: int
    train_stop: int
    predict_start: int
    predict_stop: int

    @property
    def train_range(self) -> range:
        return range(self.train_start, self.train_stop)

    @property
    def predict_range(self) -> range:
        return range(self.predict_start, self.predict_stop)


@dataclass(frozen=True)
class WalkForwardSchedule:
    folds: tuple[Fold, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def make_walk_forward_schedule(n_usable_days: int, train_size: int = TRAIN_SIZE,
                               horizon: int = HORIZON) -> WalkForwardSchedule:
    """Consecutive predict blocks of ``horizon`` over ``[train_size, n_usable_days)``,
    each trained on the ``train_size`` samples immediately before it. The last
    block may be short."""
    if train_size < 1 or horizon < 1:
        raise ValueError("train_size and horizon must be positive")
    if n_usable_days <= train_size:
        raise InsufficientHistoryError(
            f"{n_usable_days} usable days is not more than train_size={train_size}"
        )
    folds = []
    for k, start in enumerate(range(train_size, n_usable_days, horizon)):
        stop = min(start + horizon, n_usable_days)
        folds.append(Fold(k, start - train_size, start, start, stop))
    return WalkForwardSchedule(tuple(folds))
