import datetime as dt
import pathlib

import numpy as np
import pytest

from momentum_workbench.market_data import Bar, PriceSeries, synthetic_calendar

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def make_series(closes, volumes=None, ticker="TST", start="2020-01-02"):
    """Series with the given closes on consecutive business days (OHLC made consistent)."""
    closes = np.asarray(closes, dtype=np.float64)
    if volumes is None:
        volumes = np.full(len(closes), 1000)
    cal = synthetic_calendar(len(closes), start)
    bars = []
    for d, c, v in zip(cal, closes, volumes):
        bars.append(Bar(d, float(c), float(c) * 1.01, float(c) * 0.99, float(c), int(v)))
    return PriceSeries(ticker, tuple(bars))


def random_closes(rng, n, sigma=0.02, start=100.0):
    return start * np.cumprod(1.0 + rng.normal(0.0, sigma, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def day(s):
    return dt.date.fromisoformat(s)
