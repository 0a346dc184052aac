"""Scores to positions, daily P&L with turnover commission, and trade episodes.

Timing convention: row ``d`` of the score matrix is formed from information up
to the close before holding day ``d`` and earns row ``d`` of the realised
return matrix (that day's close-to-close return).
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np


class BankruptcyError(FloatingPointError):
    """Equity reached zero or below."""


class MissingReturnError(KeyError):
    """A held position has no realised return for the day."""


@dataclass(frozen=True)
class FilterConfig:
    no_trade_band: float = 0.005
    shrink_constant: float = 0.005

    def __post_init__(self):
        if self.no_trade_band < 0 or self.shrink_constant < 0:
            raise ValueError("no_trade_band and shrink_constant must be non-negative")
        if self.shrink_constant > self.no_trade_band:
            raise ValueError("shrink_constant must not exceed no_trade_band")

    @classmethod
    def from_dict(cls, d: Mapping) -> "FilterConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown FilterConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


UNFILTERED = FilterConfig(0.0, 0.0)


def filter_and_shrink(score, cfg: FilterConfig = FilterConfig()):
    """Zero inside ``[-band, band]``; otherwise move ``shrink_constant`` toward zero.

    Works on scalars and arrays alike.
    """
    s = np.asarray(score, dtype=np.float64)
    out = np.where(s > cfg.no_trade_band, s - cfg.shrink_constant,
                   np.where(s < -cfg.no_trade_band, s + cfg.shrink_constant, 0.0))
    return float(out) if out.ndim == 0 else out


def allocate_positions(adjusted_scores: Mapping[str, float], equity: float) -> dict[str, float]:
    """Signed notionals ``equity * s_i / sum|s_j|``; empty when every score is zero."""
    if not equity > 0:
        raise ValueError("equity must be positive")
    gross = sum(abs(s) for s in adjusted_scores.values())
    if gross == 0:
        return {}
    return {t: equity * s / gross for t, s in adjusted_scores.items() if s != 0}


def step_day(book: Mapping[str, float], realized_returns: Mapping[str, float],
             prev_book: Mapping[str, float], commission_rate: float) -> tuple[float, float]:
    """P&L of holding ``book`` for one day and the turnover commission to reach it."""
    pnl = 0.0
    for t, pos in book.items():
        if pos == 0:
            continue
        r = realized_returns.get(t)
        if r is None or not math.isfinite(r):
            raise MissingReturnError(f"no realised return for held ticker {t}")
        pnl += pos * r
    turnover = 0.0
    for t in set(book) | set(prev_book):
        turnover += abs(book.get(t, 0.0) - prev_book.get(t, 0.0))
    return pnl, commission_rate * turnover


@dataclass(frozen=True)
class EquityCurve:
    """``dates[0]`` is the formation date before the first holding day and
    carries ``equity_initial``; every later point is equity after a holding day."""

    dates: tuple[dt.date, ...]
    equity: np.ndarray

    @property
    def equity_initial(self) -> float:
        return float(self.equity[0])

    @property
    def equity_final(self) -> float:
        return float(self.equity[-1])

    def to_csv(self) -> str:
        lines = ["date,equity"]
        lines += [f"{d.isoformat()},{float(e)!r}" for d, e in zip(self.dates, self.equity)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Trade:
    ticker: str
    open_date: dt.date
    close_date: dt.date
    net_pnl: float

    @property
    def win(self) -> bool:
        return self.net_pnl > 0


def trades_to_csv(trades: Sequence[Trade]) -> str:
    lines = ["ticker,open_date,close_date,net_pnl,win"]
    for tr in trades:
        lines.append(f"{tr.ticker},{tr.open_date.isoformat()},{tr.close_date.isoformat()},"
                     f"{tr.net_pnl!r},{str(tr.win).lower()}")
    return "\n".join(lines) + "\n"


@dataclass
class BacktestResult:
    curve: EquityCurve
    tickers: tuple[str, ...]
    positions: np.ndarray        # (market_days, n_tickers) notionals
    pnl: np.ndarray              # (market_days, n_tickers) position * return
    costs: np.ndarray            # (market_days, n_tickers) commission
    trades: list[Trade] = field(default_factory=list)
    commission_rate: float = 0.0
    filter: FilterConfig = FilterConfig()

    @property
    def market_days(self) -> int:
        return len(self.positions)

    @property
    def holding_dates(self) -> tuple[dt.date, ...]:
        return self.curve.dates[1:]


def _default_anchor(first: dt.date) -> dt.date:
    return np.busday_offset(np.datetime64(first, "D"), -1, roll="backward").item()


def run_backtest(dates: Sequence[dt.date], tickers: Sequence[str], scores, realized,
                 cfg: FilterConfig = FilterConfig(), equity_initial: float = 1_000_000.0,
                 commission_rate: float = 0.0001, anchor_date: dt.date | None = None) -> BacktestResult:
    """Daily filter, allocate and step loop over holding days.

    ``scores`` and ``realized`` are ``(len(dates), len(tickers))`` arrays; NaN
    scores mean no prediction (flat), NaN returns are only allowed where flat.
    """
    scores = np.asarray(scores, dtype=np.float64)
    realized = np.asarray(realized, dtype=np.float64)
    n_days, n_tick = len(dates), len(tickers)
    if scores.shape != (n_days, n_tick) or realized.shape != (n_days, n_tick):
        raise ValueError("scores/realized must be (n_days, n_tickers)")
    if not equity_initial > 0:
        raise ValueError("equity_initial must be positive")
    if n_days == 0:
        raise ValueError("backtest needs at least one holding day")

    adjusted = filter_and_shrink(np.nan_to_num(scores, nan=0.0), cfg)
    positions = np.zeros((n_days, n_tick))
    pnl = np.zeros((n_days, n_tick))
    costs = np.zeros((n_days, n_tick))
    equity = np.empty(n_days + 1)
    equity[0] = equity_initial
    prev = np.zeros(n_tick)
    for d in range(n_days):
        eq = equity[d]
        gross = np.abs(adjusted[d]).sum()
        pos = eq * adjusted[d] / gross if gross > 0 else np.zeros(n_tick)
        held = pos != 0
        if np.any(held & ~np.isfinite(realized[d])):
            missing = [tickers[i] for i in np.flatnonzero(held & ~np.isfinite(realized[d]))]
            raise MissingReturnError(f"{dates[d]}: no realised return for held {missing}")
        pnl[d, held] = pos[held] * realized[d, held]
        costs[d] = commission_rate * np.abs(pos - prev)
        equity[d + 1] = eq + pnl[d].sum() - costs[d].sum()
        if not equity[d + 1] > 0:
            raise BankruptcyError(f"equity {equity[d + 1]!r} <= 0 on {dates[d]}")
        positions[d] = pos
        prev = pos

    anchor = anchor_date if anchor_date is not None else _default_anchor(dates[0])
    curve = EquityCurve((anchor,) + tuple(dates), equity)
    trades = extract_trades(dates, tickers, positions, pnl, costs)
    return BacktestResult(curve, tuple(tickers), positions, pnl, costs, trades,
                          commission_rate, cfg)


def extract_trades(dates, tickers, positions, pnl, costs) -> list[Trade]:
    """Maximal runs of nonzero position per ticker, netting commission.

    The commission paid on the day a run is flattened belongs to that run; a
    run still open at the end is closed on the last day without exit cost.
    """
    trades = []
    n_days = len(dates)
    for j, t in enumerate(tickers):
        d = 0
        while d < n_days:
            if positions[d, j] == 0:
                d += 1
                continue
            start = d
            net = 0.0
            while d < n_days and positions[d, j] != 0:
                net += pnl[d, j] - costs[d, j]
                d += 1
            end = d - 1
            if d < n_days:
                net -= costs[d, j]
            trades.append(Trade(t, dates[start], dates[end], net))
    trades.sort(key=lambda tr: (tr.open_date, tr.ticker))
    return trades
