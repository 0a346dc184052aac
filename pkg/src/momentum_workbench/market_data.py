"""OHLCV ingestion, calendar alignment and seeded synthetic universes."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import re
import warnings
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

CSV_HEADER = ("date", "open", "high", "low", "close", "volume")
SYNTHETIC_START = "2018-10-04"
RETURN_FLOOR = -0.5
MIN_SAMPLE_DAYS = 31
_RANGE_EPS = 0.001
_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class MarketDataError(ValueError):
    """Raised for malformed or inconsistent market data."""


class InsufficientHistoryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Bar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise MarketDataError(f"{self.date}: non-positive or non-finite price")
        if self.volume < 0:
            raise MarketDataError(f"{self.date}: negative volume")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise MarketDataError(
                f"{self.date}: OHLC inconsistency (open={self.open}, high={self.high}, "
                f"low={self.low}, close={self.close})"
            )


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    bars: tuple[Bar, ...]

    def __post_init__(self):
        if not self.ticker or not self.ticker.strip():
            raise MarketDataError("empty ticker symbol")
        object.__setattr__(self, "bars", tuple(self.bars))
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date <= prev.date:
                raise MarketDataError(f"{self.ticker}: dates not strictly increasing at {cur.date}")

    def __len__(self):
        return len(self.bars)

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self.bars]

    @property
    def closes(self) -> np.ndarray:
        return np.array([b.close for b in self.bars], dtype=np.float64)

    @property
    def volumes(self) -> np.ndarray:
        return np.array([b.volume for b in self.bars], dtype=np.float64)


@dataclass(frozen=True)
class Universe:
    """Per-ticker series on a shared calendar.

    ``clamp_counts`` is only populated by the synthetic generator and records
    how many simulated returns hit the positivity floor per ticker.
    """

    series: Mapping[str, PriceSeries]
    calendar: tuple[dt.date, ...]
    clamp_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def tickers(self) -> list[str]:
        return list(self.series)

    def _aligned(self, ticker, attr):
        pos = {d: i for i, d in enumerate(self.calendar)}
        out = np.full(len(self.calendar), np.nan)
        for b in self.series[ticker].bars:
            out[pos[b.date]] = getattr(b, attr)
        return out

    def aligned_closes(self, ticker: str) -> np.ndarray:
        """Closes on the calendar with NaN where the ticker has no bar."""
        return self._aligned(ticker, "close")

    def aligned_volumes(self, ticker: str) -> np.ndarray:
        return self._aligned(ticker, "volume")

    def missing_dates(self, ticker: str) -> list[dt.date]:
        have = set(self.series[ticker].dates)
        return [d for d in self.calendar if d not in have]


def _parse_date(text):
    return dt.date.fromisoformat(text.strip())


def parse_csv_bars(text: str, ticker: str) -> PriceSeries:
    """Parse a ``date,open,high,low,close,volume`` document into a sorted series."""
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise MarketDataError(f"{ticker}: empty CSV document") from None
    if tuple(h.strip().lower() for h in header) != CSV_HEADER:
        raise MarketDataError(f"{ticker}: line 1: expected header {','.join(CSV_HEADER)}")

    bars = []
    seen = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 6:
            raise MarketDataError(f"{ticker}: line {lineno}: expected 6 fields, got {len(row)}")
        try:
            date = _parse_date(row[0])
            for x in row[1:5]:
                if not _DECIMAL.match(x.strip()):
                    raise ValueError(f"price {x!r} is not a decimal number")
            o, h, l, c = (float(x) for x in row[1:5])
            vol_text = row[5].strip()
            if not vol_text.lstrip("+").isdigit():
                raise ValueError(f"volume {vol_text!r} is not a non-negative integer")
            volume = int(vol_text)
        except ValueError as exc:
            raise MarketDataError(f"{ticker}: line {lineno}: malformed row ({exc})") from None
        if date in seen:
            raise MarketDataError(
                f"{ticker}: line {lineno}: duplicate date {date} (first at line {seen[date]})"
            )
        seen[date] = lineno
        try:
            bars.append(Bar(date, o, h, l, c, volume))
        except MarketDataError as exc:
            raise MarketDataError(f"{ticker}: line {lineno}: {exc}") from None
    bars.sort(key=lambda b: b.date)
    return PriceSeries(ticker, tuple(bars))


def serialize_csv_bars(series: PriceSeries) -> str:
    """Inverse of :func:`parse_csv_bars`; floats are written with ``repr``."""
    lines = [",".join(CSV_HEADER)]
    for b in series.bars:
        lines.append(
            f"{b.date.isoformat()},{float(b.open)!r},{float(b.high)!r},{float(b.low)!r},"
            f"{float(b.close)!r},{int(b.volume)}"
        )
    return "\n".join(lines) + "\n"


def load_csv_dir(path) -> list[PriceSeries]:
    """Read every ``<TICKER>.csv`` in a directory, sorted by ticker."""
    import pathlib

    root = pathlib.Path(path)
    if not root.is_dir():
        raise MarketDataError(f"data directory not found: {root}")
    files = sorted(root.glob("*.csv"))
    if not files:
        raise MarketDataError(f"no CSV files in {root}")
    return [parse_csv_bars(f.read_text(encoding="utf-8"), f.stem) for f in files]


def align_universe(series_list: Iterable[PriceSeries]) -> Universe:
    series_list = list(series_list)
    if not series_list:
        raise MarketDataError("cannot align an empty list of series")
    series = {}
    for s in series_list:
        if not s.bars:
            raise MarketDataError(f"{s.ticker}: series has no bars")
        if s.ticker in series:
            raise MarketDataError(f"duplicate ticker {s.ticker}")
        series[s.ticker] = s
    calendar = sorted({b.date for s in series_list for b in s.bars})
    return Universe(series=series, calendar=tuple(calendar))


@dataclass(frozen=True)
class SyntheticSpec:
    n_tickers: int = 3
    n_days: int = 600
    seed: int = 20181004
    phi1: float = 0.3
    phi2: float = -0.2
    sigma: float = 0.01
    init_price: float = 100.0
    base_volume: float = 1_000_000.0
    volume_noise: float = 0.5

    def __post_init__(self):
        if self.n_tickers < 1:
            raise ValueError("n_tickers must be >= 1")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if self.n_days < MIN_SAMPLE_DAYS:
            warnings.warn(
                f"n_days={self.n_days} < {MIN_SAMPLE_DAYS}: no samples will be constructible",
                InsufficientHistoryWarning,
                stacklevel=3,
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        if not self.sigma > 0 or not self.init_price > 0:
            raise ValueError("sigma and init_price must be positive")
        if not abs(self.phi1) + abs(self.phi2) < 1:
            raise ValueError("|phi1| + |phi2| must be < 1")
        if self.base_volume < 0 or self.volume_noise < 0:
            raise ValueError("base_volume and volume_noise must be non-negative")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown SyntheticSpec keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def synthetic_calendar(n_days: int, start: str = SYNTHETIC_START) -> list[dt.date]:
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    return [d.item() for d in days]


def _path(value, scalar, n, name):
    if value is None:
        return np.full(n, float(scalar))
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length n_days={n}")
    return arr


def simulate_ticker(spec: SyntheticSpec, ticker_index: int, calendar, *, phi1_path=None,
                    phi2_path=None, sigma_path=None) -> tuple[list[Bar], int]:
    """One ticker's bars and its clamp count.

    The noise stream is keyed on ``(seed, ticker_index)`` and consumed three
    normals per day (return, range, volume), so day ``t`` always sees the same
    draws whatever the iteration order or ``n_days``.
    """
    n = spec.n_days
    phi1 = _path(phi1_path, spec.phi1, n, "phi1_path")
    phi2 = _path(phi2_path, spec.phi2, n, "phi2_path")
    sigma = _path(sigma_path, spec.sigma, n, "sigma_path")
    if np.any(np.abs(phi1) + np.abs(phi2) >= 1) or np.any(sigma <= 0):
        raise ValueError("coefficient paths must stay stationary with positive sigma")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, ticker_index])))
    noise = rng.standard_normal((n, 3))

    bars = []
    clamps = 0
    r1 = r2 = 0.0
    prev_close = spec.init_price
    for t in range(n):
        eps, eta, zeta = noise[t]
        if t == 0:
            ret = 0.0
        else:
            ret = phi1[t] * r1 + phi2[t] * r2 + sigma[t] * eps
            if ret < RETURN_FLOOR:
                ret = RETURN_FLOOR
                clamps += 1
        close = prev_close * (1.0 + ret)
        open_ = prev_close
        spread = abs(eta) * _RANGE_EPS
        high = max(open_, close) * (1.0 + spread)
        low = min(open_, close) * (1.0 - spread)
        volume = int(round(spec.base_volume * (1.0 + spec.volume_noise * abs(zeta))))
        bars.append(Bar(calendar[t], float(open_), float(high), float(low), float(close), volume))
        r2, r1 = r1, ret
        prev_close = close
    return bars, clamps


def synthetic_ticker_name(i: int) -> str:
    return f"SYN{i:03d}"


def generate_synthetic_universe(spec: SyntheticSpec, *, phi1_path=None, phi2_path=None,
                                sigma_path=None) -> Universe:
    """Seeded AR(2)-return universe. Optional per-day coefficient paths override
    the scalar ``phi1``/``phi2``/``sigma`` (used for drift and dispersion studies)."""
    calendar = synthetic_calendar(spec.n_days)
    series = {}
    clamps = {}
    for i in range(spec.n_tickers):
        name = synthetic_ticker_name(i)
        bars, n_clamped = simulate_ticker(spec, i, calendar, phi1_path=phi1_path,
                                          phi2_path=phi2_path, sigma_path=sigma_path)
        series[name] = PriceSeries(name, tuple(bars))
        clamps[name] = n_clamped
    return Universe(series=series, calendar=tuple(calendar), clamp_counts=clamps)


def sample_autocorrelation(x: Sequence[float], lag: int) -> float:
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))
