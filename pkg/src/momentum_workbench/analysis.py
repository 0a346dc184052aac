"""Prediction-quality studies: grouped correlations, high-correlation selection,
label dispersion vs correlation, and horizon decay of a single model."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from momentum_workbench.market_data import SyntheticSpec, Universe, generate_synthetic_universe
from momentum_workbench.walkforward import single_model_forecast

GROUP_LEN = 84
MIN_GROUP_LEN = 20

# seeds of the drifting-coefficient horizon study
DECAY_SEEDS = tuple(range(20181004, 20181024))


def pearson_correlation(x, y) -> float | None:
    """Pearson coefficient, or ``None`` when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("correlation needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        return None
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def spearman_correlation(x, y) -> float | None:
    return pearson_correlation(rankdata(x), rankdata(y))


@dataclass(frozen=True)
class GroupStats:
    ticker: str
    group_index: int
    start: dt.date
    end: dt.date
    n_days: int
    correlation: float | None
    label_std: float

    @property
    def defined(self) -> bool:
        return self.correlation is not None


class PredictionTrack(NamedTuple):
    """Aligned per-ticker test-span series."""

    dates: Sequence[dt.date]
    predictions: np.ndarray
    labels: np.ndarray


def group_correlations(tracks: Mapping[str, PredictionTrack], group_len: int = GROUP_LEN,
                       min_len: int = MIN_GROUP_LEN) -> list[GroupStats]:
    """Split each ticker's track into consecutive blocks of ``group_len`` days.

    A trailing block shorter than ``min_len`` is dropped.
    """
    out = []
    for ticker, (dates, preds, labels) in tracks.items():
        preds = np.asarray(preds, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        for k, start in enumerate(range(0, len(preds), group_len)):
            stop = min(start + group_len, len(preds))
            if stop - start < max(min_len, 2):
                continue
            p, y = preds[start:stop], labels[start:stop]
            out.append(GroupStats(ticker, k, dates[start], dates[stop - 1], stop - start,
                                  pearson_correlation(p, y), float(np.std(y))))
    return out


def select_high_correlation(stats: Sequence[GroupStats], threshold: float = 0.7) -> dict[int, list[str]]:
    """Per group index, the tickers whose defined correlation strictly exceeds ``threshold``."""
    selection: dict[int, list[str]] = {}
    for s in stats:
        bucket = selection.setdefault(s.group_index, [])
        if s.correlation is not None and s.correlation > threshold:
            bucket.append(s.ticker)
    return {k: sorted(v) for k, v in sorted(selection.items())}


@dataclass(frozen=True)
class DispersionTable:
    rows: tuple[GroupStats, ...]
    rank_correlation: float | None

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return [(s.label_std, s.correlation) for s in self.rows]


def dispersion_correlation_table(stats: Sequence[GroupStats]) -> DispersionTable:
    """(label std, correlation) for every defined group and their Spearman rank correlation."""
    rows = tuple(s for s in stats if s.defined)
    if len(rows) < 2:
        raise ValueError("need at least two groups with a defined correlation")
    rho = spearman_correlation([s.label_std for s in rows], [s.correlation for s in rows])
    return DispersionTable(rows, rho)


def stats_to_csv(stats: Sequence[GroupStats]) -> str:
    lines = ["ticker,group,start,end,correlation,label_std"]
    for s in stats:
        corr = "" if s.correlation is None else repr(s.correlation)
        lines.append(f"{s.ticker},{s.group_index},{s.start.isoformat()},{s.end.isoformat()},"
                     f"{corr},{s.label_std!r}")
    return "\n".join(lines) + "\n"


def restrict_scores(scores: np.ndarray, tickers: Sequence[str], group_of_day: np.ndarray,
                    selection: Mapping[int, Sequence[str]]) -> np.ndarray:
    """Blank out (NaN) scores for tickers not selected in the day's group.

    ``group_of_day[d, j]`` is the group index of ticker ``j`` on holding day
    ``d`` (-1 where it has none).
    """
    out = np.array(scores, dtype=np.float64, copy=True)
    col = {t: j for j, t in enumerate(tickers)}
    keep = np.zeros(out.shape, dtype=bool)
    for g, chosen in selection.items():
        for t in chosen:
            j = col[t]
            keep[:, j] |= group_of_day[:, j] == g
    out[~keep] = np.nan
    return out


class HorizonDecay(NamedTuple):
    corr_first: float | None
    corr_last: float | None


def split_horizon_correlation(predictions: np.ndarray, labels: np.ndarray,
                              split: int = 20) -> HorizonDecay:
    """Pooled correlation over the first ``split`` predicted days vs the rest.

    Arrays are ``(n_tickers, n_days)``; day columns are pooled across tickers.
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    first = pearson_correlation(p[:, :split].ravel(), y[:, :split].ravel())
    last = pearson_correlation(p[:, split:].ravel(), y[:, split:].ravel())
    return HorizonDecay(first, last)


def horizon_decay_experiment(universe, config=None, *, train_size: int = 240,
                             predict_days: int = 40, predictor: str = "lstm",
                             window_len: int = 10, seed: int = 0) -> HorizonDecay:
    """Train one model per ticker on its first ``train_size`` samples, predict the
    next ``predict_days`` without retraining, and compare the pooled correlation
    of the first half of the horizon against the second half."""
    preds, labels = single_model_forecast(universe, config, train_size=train_size,
                                          predict_days=predict_days, predictor=predictor,
                                          window_len=window_len, seed=seed)
    return split_horizon_correlation(preds, labels, predict_days // 2)


def drifting_phi1_path(n_days: int, drift_start: int, drift_days: int = 40,
                       phi_from: float = -0.8, phi_to: float = 0.0) -> np.ndarray:
    """``phi_from`` until ``drift_start``, then a linear walk to ``phi_to`` over ``drift_days``.

    For AR(1) returns a fixed predictor of next-day momentum reaches
    correlation ``sqrt((1 - phi1) / 2)``, so shrinking a negative ``phi1``
    toward zero erodes the signal a frozen model was trained on.
    """
    path = np.full(n_days, float(phi_from))
    k = np.arange(n_days - drift_start)
    path[drift_start:] = phi_from + (phi_to - phi_from) * np.minimum(k + 1, drift_days) / drift_days
    return path


def drifting_universe(seed: int, n_tickers: int = 3, train_size: int = 240,
                      predict_days: int = 40, window_len: int = 10) -> Universe:
    """Synthetic universe whose AR coefficient starts drifting on the first predicted label day."""
    first_end = 20 + window_len - 1                 # first sample's window end
    drift_start = first_end + train_size + 1        # label day of the first predicted sample
    n_days = drift_start + predict_days
    spec = SyntheticSpec(n_tickers=n_tickers, n_days=n_days, seed=seed, phi1=-0.8, phi2=0.0)
    return generate_synthetic_universe(
        spec, phi1_path=drifting_phi1_path(n_days, drift_start, predict_days))
