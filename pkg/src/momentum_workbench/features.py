"""The six price/volume features, computed per ticker per trading day.

Undefined entries are NaN. All lookbacks are in trading days: a week is 5 and
a month is 20. Feature columns are always in ``FEATURE_NAMES`` order since the
model reads windows positionally.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from momentum_workbench.market_data import PriceSeries, Universe

FEATURE_NAMES = (
    "ret",
    "ret_momentum",
    "ret_acceleration",
    "week_price_momentum",
    "month_price_momentum",
    "volume_velocity",
)
N_FEATURES = len(FEATURE_NAMES)
WEEK = 5
MONTH = 20
# longest close lookback across all features; the frame is undefined before it
WARMUP = MONTH

RET, RET_MOMENTUM, RET_ACCELERATION, WEEK_PM, MONTH_PM, VOLUME_VELOCITY = range(N_FEATURES)


class FeatureVector(NamedTuple):
    ret: float
    ret_momentum: float
    ret_acceleration: float
    week_price_momentum: float
    month_price_momentum: float
    volume_velocity: float


def _closes(src) -> np.ndarray:
    if isinstance(src, PriceSeries):
        return src.closes
    return np.asarray(src, dtype=np.float64)


def _volumes(src) -> np.ndarray:
    if isinstance(src, PriceSeries):
        return src.volumes
    return np.asarray(src, dtype=np.float64)


def _growth(x: np.ndarray, lag: int) -> np.ndarray:
    out = np.full(x.shape, np.nan)
    if len(x) > lag:
        # overflow yields inf, which the definedness mask rejects
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            out[lag:] = x[lag:] / x[:-lag] - 1.0
    return out


def _diff(x: np.ndarray) -> np.ndarray:
    out = np.full(x.shape, np.nan)
    if len(x) > 1:
        out[1:] = x[1:] - x[:-1]
    return out


def compute_returns(series) -> np.ndarray:
    """Simple close-to-close returns; index 0 is undefined."""
    return _growth(_closes(series), 1)


def compute_return_momentum(returns: Sequence[float]) -> np.ndarray:
    return _diff(np.asarray(returns, dtype=np.float64))


def compute_return_acceleration(momentum: Sequence[float]) -> np.ndarray:
    return _diff(np.asarray(momentum, dtype=np.float64))


def compute_week_price_momentum(series) -> np.ndarray:
    return _growth(_closes(series), WEEK)


def compute_month_price_momentum(series) -> np.ndarray:
    return _growth(_closes(series), MONTH)


def compute_volume_velocity(series) -> np.ndarray:
    """Day-over-day volume growth; undefined where the prior volume is zero."""
    v = _volumes(series)
    out = np.full(v.shape, np.nan)
    if len(v) > 1:
        prev = v[:-1]
        ok = prev > 0
        out[1:][ok] = v[1:][ok] / prev[ok] - 1.0
    return out


@dataclass(frozen=True)
class FeatureFrame:
    """Per-day feature matrix for one ticker.

    ``values`` is ``(n_dates, 6)`` with NaN rows wherever the row is undefined,
    so ``values[defined]`` is always finite.
    """

    ticker: str
    dates: tuple[dt.date, ...]
    values: np.ndarray
    defined: np.ndarray
    first_defined_index: int | None

    def __len__(self):
        return len(self.dates)

    def row(self, i: int) -> FeatureVector | None:
        if not self.defined[i]:
            return None
        return FeatureVector(*(float(x) for x in self.values[i]))

    @property
    def n_defined(self) -> int:
        return int(self.defined.sum())

    def to_csv(self) -> str:
        lines = ["date," + ",".join(FEATURE_NAMES)]
        for d, ok, row in zip(self.dates, self.defined, self.values):
            cells = [repr(float(x)) for x in row] if ok else [""] * N_FEATURES
            lines.append(d.isoformat() + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def _span_complete(present: np.ndarray, span: int) -> np.ndarray:
    """True at i when ``present[i-span..i]`` are all True."""
    n = len(present)
    csum = np.concatenate([[0], np.cumsum(~present)])
    out = np.zeros(n, dtype=bool)
    if n > span:
        out[span:] = (csum[span + 1:] - csum[:n - span]) == 0
    return out


def feature_matrix(closes: np.ndarray, volumes: np.ndarray):
    """Stack the six features and the definedness mask for aligned arrays.

    ``closes``/``volumes`` may contain NaN for days the ticker did not trade. A
    row is defined only when every close in the month lookback and both
    volumes of the velocity ratio are present, and all six values are finite.
    """
    closes = np.asarray(closes, dtype=np.float64)
    volumes = np.asarray(volumes, dtype=np.float64)
    r = compute_returns(closes)
    m = compute_return_momentum(r)
    a = compute_return_acceleration(m)
    values = np.column_stack([
        r,
        m,
        a,
        compute_week_price_momentum(closes),
        compute_month_price_momentum(closes),
        compute_volume_velocity(volumes),
    ]) if len(closes) else np.empty((0, N_FEATURES))

    defined = (
        _span_complete(~np.isnan(closes), WARMUP)
        & _span_complete(~np.isnan(volumes), 1)
        & np.all(np.isfinite(values), axis=1)
    )
    values = values.copy()
    values[~defined] = np.nan
    return values, defined, m


def build_feature_frame(series: PriceSeries, calendar: Sequence[dt.date] | None = None) -> FeatureFrame:
    """Features for one series, optionally laid out on a wider calendar.

    Dates absent from ``series`` become gaps; no forward fill is applied.
    """
    if calendar is None:
        dates = tuple(series.dates)
        closes, volumes = series.closes, series.volumes
    else:
        dates = tuple(calendar)
        pos = {d: i for i, d in enumerate(dates)}
        closes = np.full(len(dates), np.nan)
        volumes = np.full(len(dates), np.nan)
        for b in series.bars:
            closes[pos[b.date]] = b.close
            volumes[pos[b.date]] = b.volume
    values, defined, _ = feature_matrix(closes, volumes)
    idx = np.flatnonzero(defined)
    first = int(idx[0]) if idx.size else None
    return FeatureFrame(series.ticker, dates, values, defined, first)


def universe_frames(universe: Universe) -> dict[str, FeatureFrame]:
    return {t: build_feature_frame(s, universe.calendar) for t, s in universe.series.items()}
