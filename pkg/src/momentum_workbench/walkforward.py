"""Per-(ticker, fold) train/predict jobs over a walk-forward schedule."""

from __future__ import annotations

import datetime as dt
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from momentum_workbench.dataset import (
    Dataset,
    InsufficientHistoryError,
    Sample,
    Scaler,
    apply_scaler,
    build_samples,
    make_walk_forward_schedule,
    stack_windows,
)
from momentum_workbench.errors import StageError
from momentum_workbench.features import build_feature_frame, compute_return_momentum, compute_returns
from momentum_workbench.market_data import Universe
from momentum_workbench.predictor import PredictorHandle, TrainConfig, fit_predictor, predict

log = logging.getLogger(__name__)

LABEL_KINDS = ("momentum", "return")


@dataclass
class TickerData:
    ticker: str
    dates: tuple[dt.date, ...]
    returns: np.ndarray
    momentum: np.ndarray
    samples: list[Sample]
    frame: object


def prepare_ticker(universe: Universe, ticker: str, label: str = "momentum",
                   window_len: int = 10) -> TickerData:
    if label not in LABEL_KINDS:
        raise ValueError(f"label must be one of {LABEL_KINDS}")
    frame = build_feature_frame(universe.series[ticker], universe.calendar)
    closes = universe.aligned_closes(ticker)
    r = compute_returns(closes)
    m = compute_return_momentum(r)
    samples = build_samples(frame, m if label == "momentum" else r, window_len)
    return TickerData(ticker, tuple(universe.calendar), r, m, samples, frame)


def fold_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


@dataclass
class FoldResult:
    ticker: str
    fold_index: int
    train_end_indices: list[int]
    predict_end_indices: list[int]
    handle: PredictorHandle
    losses: np.ndarray | None
    predictions: np.ndarray


def _run_fold(job):
    ticker, fold_index, train, test, kind, config = job
    ds = Dataset.fit(train)
    try:
        handle, losses = fit_predictor(kind, ds, config)
    except (FloatingPointError, ValueError) as exc:
        raise StageError("predictor", exc, ticker, fold_index) from exc
    windows = stack_windows([apply_scaler(s, ds.scaler) for s in test])
    return FoldResult(ticker, fold_index, [s.end_index for s in train],
                      [s.end_index for s in test], handle, losses, predict(handle, windows))


def map_jobs(fn, jobs, workers: int | None):
    """Ordered map, in-process for one worker. Results never depend on ``workers``."""
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class TickerForecast:
    """Out-of-sample predictions for one ticker, one entry per predicted sample."""

    ticker: str
    end_index: np.ndarray      # window end day t (calendar index)
    fold: np.ndarray
    prediction: np.ndarray
    label: np.ndarray          # realised label m[t+1] (or r[t+1])
    realized_return: np.ndarray  # r[t+1], earned by positions formed at t

    @property
    def hold_index(self) -> np.ndarray:
        return self.end_index + 1


def walk_forward(universe: Universe, config: TrainConfig, *, predictor: str = "lstm",
                 train_size: int = 240, horizon: int = 10, window_len: int = 10,
                 label: str = "momentum", seed: int = 0, workers: int | None = 1,
                 skip_short: bool = True):
    """Train/predict every fold of every ticker.

    Returns ``(forecasts, fold_results, ticker_data)``. Tickers without enough
    samples for one fold are skipped with a warning when ``skip_short``.
    """
    data = {}
    jobs = []
    for ti, ticker in enumerate(universe.tickers):
        td = prepare_ticker(universe, ticker, label, window_len)
        data[ticker] = td
        try:
            schedule = make_walk_forward_schedule(len(td.samples), train_size, horizon)
        except InsufficientHistoryError:
            if not skip_short:
                raise
            log.warning("%s: %d samples, not enough for one fold; skipped", ticker,
                        len(td.samples))
            continue
        for fold in schedule:
            cfg = TrainConfig(**{**config.to_dict(),
                                 "seed": fold_seed(seed, config.seed, ti, fold.index)})
            jobs.append((ticker, fold.index,
                         [td.samples[j] for j in fold.train_range],
                         [td.samples[j] for j in fold.predict_range], predictor, cfg))
    log.info("walk-forward: %d fold jobs over %d tickers", len(jobs), len(data))
    results = map_jobs(_run_fold, jobs, workers)

    forecasts = {}
    for ticker, td in data.items():
        mine = [r for r in results if r.ticker == ticker]
        if not mine:
            continue
        end = np.concatenate([r.predict_end_indices for r in mine]).astype(np.int64)
        fold = np.concatenate([[r.fold_index] * len(r.predict_end_indices) for r in mine])
        pred = np.concatenate([r.predictions for r in mine])
        lab = td.momentum if label == "momentum" else td.returns
        forecasts[ticker] = TickerForecast(ticker, end, fold.astype(np.int64), pred,
                                           lab[end + 1], td.returns[end + 1])
    return forecasts, results, data


def score_matrix(forecasts: dict[str, TickerForecast], tickers, n_calendar: int):
    """Dense ``(n_calendar, n_tickers)`` score and realised-return matrices by holding day."""
    scores = np.full((n_calendar, len(tickers)), np.nan)
    realized = np.full((n_calendar, len(tickers)), np.nan)
    fold_of = np.full((n_calendar, len(tickers)), -1, dtype=np.int64)
    for j, t in enumerate(tickers):
        f = forecasts.get(t)
        if f is None:
            continue
        scores[f.hold_index, j] = f.prediction
        realized[f.hold_index, j] = f.realized_return
        fold_of[f.hold_index, j] = f.fold
    return scores, realized, fold_of


def single_model_forecast(universe: Universe, config: TrainConfig | None = None, *,
                          train_size: int = 240, predict_days: int = 40,
                          predictor: str = "lstm", window_len: int = 10, seed: int = 0,
                          workers: int | None = 1):
    """One model per ticker on its first ``train_size`` samples, then
    ``predict_days`` predictions without retraining.

    Returns ``(predictions, labels)`` of shape ``(n_tickers, predict_days)``.
    """
    config = config or TrainConfig()
    jobs = []
    for ti, ticker in enumerate(universe.tickers):
        td = prepare_ticker(universe, ticker, "momentum", window_len)
        if len(td.samples) < train_size + predict_days:
            raise InsufficientHistoryError(
                f"{ticker}: {len(td.samples)} samples < {train_size + predict_days} needed"
            )
        cfg = TrainConfig(**{**config.to_dict(), "seed": fold_seed(seed, config.seed, ti, 0)})
        jobs.append((ticker, 0, td.samples[:train_size],
                     td.samples[train_size:train_size + predict_days], predictor, cfg))
    results = map_jobs(_run_fold, jobs, workers)
    preds = np.stack([r.predictions for r in results])
    labels = np.stack([[s.label for s in job[3]] for job in jobs])
    return preds, labels


def dataset_dump(result: FoldResult, dates) -> dict:
    """Audit record of one fold: training/predict end days and the scaler."""
    scaler: Scaler = result.handle.scaler
    return {
        "ticker": result.ticker,
        "fold": result.fold_index,
        "train_end_days": [dates[i].isoformat() for i in result.train_end_indices],
        "predict_end_days": [dates[i].isoformat() for i in result.predict_end_indices],
        "scaler": scaler.to_dict(),
    }
