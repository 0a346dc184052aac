import datetime as dt
import json
import warnings

import numpy as np
import pytest

from momentum_workbench.features import compute_returns
from momentum_workbench.market_data import (
    Bar,
    InsufficientHistoryWarning,
    MarketDataError,
    PriceSeries,
    SyntheticSpec,
    align_universe,
    generate_synthetic_universe,
    load_csv_dir,
    parse_csv_bars,
    sample_autocorrelation,
    serialize_csv_bars,
    synthetic_calendar,
)

GOOD = """date,open,high,low,close,volume
2020-01-03,10,11,9.5,10.5,200
2020-01-02,9.8,10.2,9.7,10,100
"""


def test_parse_sorts_by_date():
    s = parse_csv_bars(GOOD, "AAA")
    assert s.dates == [dt.date(2020, 1, 2), dt.date(2020, 1, 3)]
    assert s.closes.tolist() == [10.0, 10.5]
    assert s.volumes.tolist() == [100.0, 200.0]


@pytest.mark.parametrize("row,fragment", [
    ("2020-01-04,10,9,9.5,10.5,1", "line 4"),           # high below close
    ("2020-01-04,10,11,9.5,-1,1", "line 4"),            # negative close
    ("2020-01-04,10,11,9.5,10,-5", "line 4"),           # negative volume
    ("2020-01-04,10,11,9.5,abc,5", "line 4"),           # not a number
    ("2020-01-04,10,11,9.5,10", "line 4"),              # short row
    ("2020-01-03,10,11,9.5,10.5,200", "duplicate"),     # duplicate date
])
def test_parse_rejects_bad_rows(row, fragment):
    with pytest.raises(MarketDataError, match=fragment):
        parse_csv_bars(GOOD + row + "\n", "AAA")


def test_parse_rejects_bad_header():
    with pytest.raises(MarketDataError, match="header"):
        parse_csv_bars("day,open,high,low,close,volume\n", "AAA")


def test_csv_round_trip_exact(tmp_path):
    u = generate_synthetic_universe(SyntheticSpec(n_tickers=2, n_days=50, seed=7))
    for t, s in u.series.items():
        text = serialize_csv_bars(s)
        back = parse_csv_bars(text, t)
        assert back == s
        (tmp_path / f"{t}.csv").write_text(text)
    loaded = align_universe(load_csv_dir(tmp_path))
    assert loaded.tickers == u.tickers
    assert loaded.calendar == u.calendar


def test_load_csv_dir_does_not_modify_inputs(tmp_path):
    (tmp_path / "AAA.csv").write_text(GOOD)
    before = (tmp_path / "AAA.csv").read_bytes()
    load_csv_dir(tmp_path)
    assert (tmp_path / "AAA.csv").read_bytes() == before


def test_align_universe_marks_gaps():
    a = parse_csv_bars(GOOD, "AAA")
    b = PriceSeries("BBB", (Bar(dt.date(2020, 1, 3), 5, 5, 5, 5, 1),))
    u = align_universe([a, b])
    assert u.calendar == (dt.date(2020, 1, 2), dt.date(2020, 1, 3))
    assert np.isnan(u.aligned_closes("BBB")[0])
    assert u.missing_dates("BBB") == [dt.date(2020, 1, 2)]
    assert u.missing_dates("AAA") == []


def test_synthetic_counts_and_determinism():
    spec = SyntheticSpec(n_tickers=3, n_days=400, seed=99)
    u1 = generate_synthetic_universe(spec)
    u2 = generate_synthetic_universe(spec)
    assert len(u1.tickers) == 3
    assert all(len(s) == 400 for s in u1.series.values())
    for t in u1.tickers:
        assert serialize_csv_bars(u1.series[t]) == serialize_csv_bars(u2.series[t])


def test_synthetic_prefix_stable():
    # day t draws do not depend on n_days
    short = generate_synthetic_universe(SyntheticSpec(n_days=100, seed=3))
    long = generate_synthetic_universe(SyntheticSpec(n_days=300, seed=3))
    for t in short.tickers:
        assert short.series[t].bars == long.series[t].bars[:100]


def test_synthetic_calendar_is_business_days():
    cal = synthetic_calendar(30)
    assert cal[0] == dt.date(2018, 10, 4)
    assert all(d.weekday() < 5 for d in cal)
    assert all(b > a for a, b in zip(cal, cal[1:]))


def test_synthetic_return_autocorrelation_matches_ar2():
    # AR(2) with phi1=0.3, phi2=-0.2: rho1 = phi1 / (1 - phi2) = 0.25
    u = generate_synthetic_universe(SyntheticSpec(n_tickers=1, n_days=20000, seed=1))
    r = compute_returns(u.series["SYN000"])[2:]
    assert sample_autocorrelation(r, 1) == pytest.approx(0.25, abs=0.03)
    rho2 = 0.3 * 0.25 - 0.2
    assert sample_autocorrelation(r, 2) == pytest.approx(rho2, abs=0.03)


def test_synthetic_ohlc_consistent():
    u = generate_synthetic_universe(SyntheticSpec(n_tickers=2, n_days=300, sigma=0.05, phi1=0.0,
                                                  phi2=0.0, seed=5))
    for s in u.series.values():
        for b in s.bars:
            assert b.low <= min(b.open, b.close) <= max(b.open, b.close) <= b.high
            assert b.volume >= 0


def test_spec_warns_below_sample_minimum():
    with pytest.warns(InsufficientHistoryWarning, match="31"):
        SyntheticSpec(n_days=30)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SyntheticSpec(n_days=31)


@pytest.mark.parametrize("bad", [{"n_tickers": 0}, {"n_days": 0}, {"sigma": 0.0},
                                 {"phi1": 0.7, "phi2": -0.4}, {"seed": -1}])
def test_spec_rejects_invalid(bad):
    with pytest.raises(ValueError):
        SyntheticSpec(**bad)


def test_spec_json_round_trip_and_unknown_keys():
    spec = SyntheticSpec(n_tickers=4, seed=11)
    assert SyntheticSpec.from_json(json.dumps(spec.to_dict())) == spec
    with pytest.raises(ValueError, match="unknown"):
        SyntheticSpec.from_dict({"n_ticker": 3})
