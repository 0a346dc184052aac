"""Summary statistics of a backtest run."""

from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from momentum_workbench.backtest import BacktestResult, EquityCurve, Trade

TRADING_DAYS_PER_YEAR = 252


def total_return(equity_initial: float, equity_final: float) -> float:
    return equity_final / equity_initial - 1.0


def annual_return(total: float, market_days: int) -> float:
    """Geometric annualisation over a 252-day year."""
    if market_days <= 0:
        raise ValueError("market_days must be positive")
    return (1.0 + total) ** (TRADING_DAYS_PER_YEAR / market_days) - 1.0


def max_drawdown(equity: Sequence[float]) -> float:
    """Largest fractional fall from a running peak."""
    e = np.asarray(equity, dtype=np.float64)
    if e.size == 0:
        raise ValueError("empty equity curve")
    peak = np.maximum.accumulate(e)
    return float(np.max((peak - e) / peak))


@dataclass(frozen=True)
class BacktestReport:
    start_date: dt.date
    end_date: dt.date
    market_days: int
    in_market_days_ratio: float
    position_qualified_ratio: float
    commission_rate: float
    equity_initial: float
    equity_final: float
    total_return: float
    annual_return: float
    win_rate: float | None
    max_drawdown: float
    # position-day variant of the win rate, reported alongside for comparison
    win_rate_position_days: float | None = None
    n_trades: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        d["end_date"] = self.end_date.isoformat()
        return d


def compute_metrics(curve: EquityCurve, positions, trades: Sequence[Trade], universe_size: int,
                    commission_rate: float, pnl=None) -> BacktestReport:
    """Headline benchmarks plus the return identities.

    ``positions`` is the ``(market_days, n_tickers)`` notional history; ``pnl``
    (same shape, position times return) enables the position-day win rate.
    """
    if universe_size <= 0:
        raise ValueError("universe_size must be positive")
    positions = np.asarray(positions, dtype=np.float64)
    market_days = len(curve.equity) - 1
    if market_days < 1 or positions.shape[0] != market_days:
        raise ValueError("curve and position history disagree on market days")
    nonzero = positions != 0
    tot = total_return(curve.equity_initial, curve.equity_final)

    wr_days = None
    if pnl is not None and nonzero.any():
        wr_days = float(np.count_nonzero(np.asarray(pnl)[nonzero] > 0) / np.count_nonzero(nonzero))

    return BacktestReport(
        start_date=curve.dates[1],
        end_date=curve.dates[-1],
        market_days=market_days,
        in_market_days_ratio=float(np.count_nonzero(nonzero.any(axis=1)) / market_days),
        position_qualified_ratio=float(np.count_nonzero(nonzero) / (universe_size * market_days)),
        commission_rate=commission_rate,
        equity_initial=curve.equity_initial,
        equity_final=curve.equity_final,
        total_return=tot,
        annual_return=annual_return(tot, market_days),
        win_rate=(sum(t.win for t in trades) / len(trades)) if trades else None,
        max_drawdown=max_drawdown(curve.equity),
        win_rate_position_days=wr_days,
        n_trades=len(trades),
    )


def report_for(result: BacktestResult, universe_size: int | None = None) -> BacktestReport:
    return compute_metrics(result.curve, result.positions, result.trades,
                           universe_size or len(result.tickers), result.commission_rate,
                           result.pnl)
