"""End-to-end orchestration: ingest, features, walk-forward, backtest, analysis, files."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import pathlib
import platform
from dataclasses import dataclass

import numpy as np

import momentum_workbench
from momentum_workbench import _accel, svg
from momentum_workbench.analysis import (
    PredictionTrack,
    dispersion_correlation_table,
    group_correlations,
    pearson_correlation,
    restrict_scores,
    select_high_correlation,
    split_horizon_correlation,
    stats_to_csv,
)
from momentum_workbench.backtest import UNFILTERED, BacktestResult, run_backtest, trades_to_csv
from momentum_workbench.config import RunConfig
from momentum_workbench.dataset import InsufficientHistoryError
from momentum_workbench.errors import StageError
from momentum_workbench.features import compute_returns
from momentum_workbench.market_data import (
    MarketDataError,
    Universe,
    align_universe,
    generate_synthetic_universe,
    load_csv_dir,
    serialize_csv_bars,
)
from momentum_workbench.metrics import BacktestReport, report_for
from momentum_workbench.walkforward import (
    dataset_dump,
    score_matrix,
    single_model_forecast,
    walk_forward,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
REPORT = "report.json"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "isoformat"):
        return o.isoformat()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _clean(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, default=_json_default) + "\n"


def load_universe(cfg: RunConfig) -> Universe:
    src = cfg.data_source
    try:
        if src.csv_dir is not None:
            return align_universe(load_csv_dir(src.csv_dir))
        return generate_synthetic_universe(src.synthetic)
    except MarketDataError as exc:
        raise StageError("market-data", exc) from exc


def generate_data(cfg: RunConfig, out_dir=None) -> list[pathlib.Path]:
    """Write one CSV per synthetic ticker into ``<output_dir>/data``."""
    if cfg.data_source.synthetic is None:
        raise ValueError("generate needs a synthetic data_source")
    universe = generate_synthetic_universe(cfg.data_source.synthetic)
    data_dir = pathlib.Path(out_dir or cfg.output_dir) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ticker, series in universe.series.items():
        p = data_dir / f"{ticker}.csv"
        p.write_text(serialize_csv_bars(series), encoding="utf-8", newline="\n")
        paths.append(p)
    return paths


class _Writer:
    """Collects output files so the manifest can list and hash them."""

    def __init__(self, root: pathlib.Path):
        self.root = root
        self.files: dict[str, str] = {}

    def text(self, rel: str, content: str):
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(content, encoding="utf-8", newline="\n")
        self.files[rel] = hashlib.sha256(content.encode("utf-8")).hexdigest()


@dataclass
class RunOutcome:
    report: BacktestReport
    summary: dict
    result: BacktestResult
    output_dir: pathlib.Path


def _span(forecasts):
    holds = np.concatenate([f.hold_index for f in forecasts.values()])
    return int(holds.min()), int(holds.max()) + 1


def _pooled(forecasts, attr="prediction"):
    p = np.concatenate([getattr(f, attr) for f in forecasts.values()])
    y = np.concatenate([f.label for f in forecasts.values()])
    return pearson_correlation(p, y) if len(p) >= 2 else None


def _group_of_day(forecasts, tickers, n_calendar, group_len, stats):
    kept = {(s.ticker, s.group_index) for s in stats}
    out = np.full((n_calendar, len(tickers)), -1, dtype=np.int64)
    for j, t in enumerate(tickers):
        f = forecasts.get(t)
        if f is None:
            continue
        g = np.arange(len(f.hold_index)) // group_len
        ok = np.array([(t, int(k)) in kept for k in g], dtype=bool)
        out[f.hold_index[ok], j] = g[ok]
    return out


def _backtest(cfg, dates, tickers, scores, realized, anchor, flt=None):
    try:
        return run_backtest(dates, tickers, scores, realized, flt or cfg.filter,
                            cfg.equity_initial, cfg.commission_rate, anchor)
    except (ArithmeticError, KeyError, ValueError) as exc:
        raise StageError("backtest-engine", exc) from exc


def _label_study(universe, cfg, forecasts):
    """Return-label walk-forward compared with the momentum-label run.

    Reports the return-label correlation, two ways of turning return
    predictions into momentum (differencing predictions, or subtracting the
    last realised return), and momentum predictions turned back into returns.
    """
    ret_fc, _, _ = walk_forward(universe, cfg.lstm, predictor=cfg.predictor,
                                train_size=cfg.train_size, horizon=cfg.horizon,
                                window_len=cfg.window_len, label="return", seed=cfg.seed,
                                workers=cfg.workers)
    p, r_next, diff_p, diff_m, impl_p, impl_m = [], [], [], [], [], []
    for t, f in ret_fc.items():
        p.append(f.prediction)
        r_next.append(f.realized_return)
        k = np.flatnonzero(np.diff(f.end_index) == 1) + 1
        diff_p.append(f.prediction[k] - f.prediction[k - 1])
        diff_m.append(f.realized_return[k] - f.realized_return[k - 1])
        r_t = _returns_at(universe, t, f.end_index)
        impl_p.append(f.prediction - r_t)
        impl_m.append(f.realized_return - r_t)
    back_p, back_r = [], []
    for t, f in forecasts.items():
        back_p.append(_returns_at(universe, t, f.end_index) + f.prediction)
        back_r.append(f.realized_return)
    cat = np.concatenate
    return {
        "return_label_correlation": pearson_correlation(cat(p), cat(r_next)),
        "prediction_differential_vs_momentum": pearson_correlation(cat(diff_p), cat(diff_m)),
        "implied_momentum_vs_momentum": pearson_correlation(cat(impl_p), cat(impl_m)),
        "momentum_to_return_correlation": pearson_correlation(cat(back_p), cat(back_r)),
    }


def _returns_at(universe, ticker, idx):
    return compute_returns(universe.aligned_closes(ticker))[idx]


def run_pipeline(cfg: RunConfig) -> RunOutcome:
    out = pathlib.Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(out)
    universe = load_universe(cfg)
    tickers = universe.tickers
    cal = universe.calendar
    log.info("universe: %d tickers, %d calendar days", len(tickers), len(cal))

    try:
        forecasts, folds, data = walk_forward(
            universe, cfg.lstm, predictor=cfg.predictor, train_size=cfg.train_size,
            horizon=cfg.horizon, window_len=cfg.window_len, seed=cfg.seed, workers=cfg.workers)
    except InsufficientHistoryError as exc:
        raise StageError("dataset-builder", exc) from exc
    except FloatingPointError as exc:
        raise StageError("predictor", exc) from exc
    if not forecasts:
        raise StageError("dataset-builder", InsufficientHistoryError(
            f"no ticker has more than train_size={cfg.train_size} samples"))

    for t, td in data.items():
        w.text(f"features/{t}.csv", td.frame.to_csv())
    for r in folds:
        tag = f"{r.ticker}/fold_{r.fold_index:03d}.json"
        w.text(f"folds/{tag}", dumps(dataset_dump(r, cal)))
        w.text(f"checkpoints/{tag}", dumps(r.handle.to_dict()))

    lines = ["ticker,end_date,hold_date,fold,prediction,label,realized_return"]
    for t, f in forecasts.items():
        for e, k, p, y, rr in zip(f.end_index, f.fold, f.prediction, f.label, f.realized_return):
            lines.append(f"{t},{cal[e].isoformat()},{cal[e + 1].isoformat()},{k},{float(p)!r},"
                         f"{float(y)!r},{float(rr)!r}")
    w.text("predictions.csv", "\n".join(lines) + "\n")

    # backtest over the holding-day span covered by any forecast
    lo, hi = _span(forecasts)
    scores, realized, _ = score_matrix(forecasts, tickers, len(cal))
    dates = cal[lo:hi]
    anchor = cal[lo - 1]
    result = _backtest(cfg, dates, tickers, scores[lo:hi], realized[lo:hi], anchor)
    report = report_for(result, len(tickers))
    report_doc = report.to_dict()
    report_doc["config"] = {
        "filter": cfg.filter.to_dict(),
        "commission_rate": cfg.commission_rate,
        "equity_initial": cfg.equity_initial,
        "predictor": cfg.predictor,
        "universe_size": len(tickers),
        "train_size": cfg.train_size,
        "horizon": cfg.horizon,
    }
    w.text(REPORT, dumps(report_doc))
    w.text("equity.csv", result.curve.to_csv())
    w.text("trades.csv", trades_to_csv(result.trades))
    w.text("equity.svg", svg.line_chart(result.curve.dates, result.curve.equity,
                                        "Cumulative Return Chart"))

    summary = _analysis(cfg, universe, forecasts, tickers, cal, lo, hi, scores, realized,
                        anchor, w)
    w.text("analysis/summary.json", dumps(summary))

    manifest = {
        "schema_version": 1,
        "package": "momentum_workbench",
        "versions": {
            "momentum_workbench": momentum_workbench.__version__,
            "numpy": np.__version__,
            "numba": getattr(_accel.numba, "__version__", None),
            "python": platform.python_version(),
        },
        "backend": _accel.backend_name(),
        "seeds": {
            "run": cfg.seed,
            "lstm": cfg.lstm.seed,
            "data": cfg.data_source.synthetic.seed if cfg.data_source.synthetic else None,
        },
        "config": cfg.to_dict(),
        "files": dict(sorted(w.files.items())),
    }
    (out / MANIFEST).write_text(dumps(manifest), encoding="utf-8", newline="\n")
    return RunOutcome(report, summary, result, out)


def _analysis(cfg, universe, forecasts, tickers, cal, lo, hi, scores, realized, anchor, w):
    summary: dict = {"predictor": cfg.predictor}
    pers, _, _ = walk_forward(universe, cfg.lstm, predictor="persistence",
                              train_size=cfg.train_size, horizon=cfg.horizon,
                              window_len=cfg.window_len, seed=cfg.seed, workers=1)
    summary["pooled_correlation"] = {"model": _pooled(forecasts), "persistence": _pooled(pers)}

    tracks = {t: PredictionTrack([cal[i] for i in f.hold_index], f.prediction, f.label)
              for t, f in forecasts.items()}
    stats = group_correlations(tracks, cfg.group_len)
    w.text("analysis/groups.csv", stats_to_csv(stats))
    selection = select_high_correlation(stats, cfg.correlation_threshold)
    summary["correlation_threshold"] = cfg.correlation_threshold
    summary["selection"] = {str(k): v for k, v in selection.items()}

    gmap = _group_of_day(forecasts, tickers, len(cal), cfg.group_len, stats)
    restricted = restrict_scores(scores, tickers, gmap, selection)
    hc = _backtest(cfg, cal[lo:hi], tickers, restricted[lo:hi], realized[lo:hi], anchor)
    summary["high_correlation_backtest"] = _brief(report_for(hc, len(tickers)))
    w.text("analysis/high_correlation_equity.csv", hc.curve.to_csv())

    unf = _backtest(cfg, cal[lo:hi], tickers, scores[lo:hi], realized[lo:hi], anchor, UNFILTERED)
    summary["unfiltered_backtest"] = _brief(report_for(unf, len(tickers)))

    try:
        table = dispersion_correlation_table(stats)
        summary["dispersion"] = {"rank_correlation": table.rank_correlation,
                                 "n_groups": len(table.rows)}
        lines = ["ticker,group,label_std,correlation"]
        lines += [f"{s.ticker},{s.group_index},{s.label_std!r},{s.correlation!r}"
                  for s in table.rows]
        w.text("analysis/dispersion.csv", "\n".join(lines) + "\n")
        w.text("analysis/dispersion.svg", svg.scatter_chart(
            [s.label_std for s in table.rows], [s.correlation for s in table.rows],
            "Label standard deviation vs correlation", "label std", "correlation"))
    except ValueError as exc:
        summary["dispersion"] = {"rank_correlation": None, "n_groups": 0, "note": str(exc)}

    summary["horizon_decay"] = None
    if cfg.horizon_decay:
        try:
            preds, labels = single_model_forecast(
                universe, cfg.lstm, train_size=cfg.train_size,
                predict_days=cfg.horizon_decay_days, predictor=cfg.predictor,
                window_len=cfg.window_len, seed=cfg.seed, workers=cfg.workers)
            hd = split_horizon_correlation(preds, labels, cfg.horizon_decay_days // 2)
            summary["horizon_decay"] = {"corr_first": hd.corr_first, "corr_last": hd.corr_last,
                                        "split_day": cfg.horizon_decay_days // 2}
        except InsufficientHistoryError as exc:
            summary["horizon_decay"] = {"note": str(exc)}

    summary["label_study"] = _label_study(universe, cfg, forecasts) if cfg.label_study else None
    summary["clamp_counts"] = dict(universe.clamp_counts)
    return summary


def _brief(rep: BacktestReport) -> dict:
    keys = ("market_days", "in_market_days_ratio", "equity_final", "total_return",
            "annual_return", "win_rate", "max_drawdown")
    d = rep.to_dict()
    return {k: d[k] for k in keys}


TABLE_ROWS = (
    ("Start Date", "start_date", "date"),
    ("End Date", "end_date", "date"),
    ("Market Days", "market_days", "int"),
    ("In the Market Days", "in_market_days_ratio", "pct"),
    ("Position Qualified", "position_qualified_ratio", "pct"),
    ("Commision", "commission_rate", "pct2"),
    ("Equity Initial", "equity_initial", "money"),
    ("Equity Final", "equity_final", "money"),
    ("Return", "total_return", "pct"),
    ("Ann. Return", "annual_return", "pct"),
    ("Win Rate", "win_rate", "pct"),
    ("Max. Drawdown", "max_drawdown", "pct"),
)


def _fmt(value, kind):
    if value is None:
        return "n/a"
    if kind == "pct":
        return f"{100 * value:.6f} %"
    if kind == "pct2":
        return f"{100 * value:.2f} %"
    if kind == "money":
        return f"{value:.2f}".rstrip("0").rstrip(".")
    return str(value)


def render_report(run_dir) -> str:
    """Fixed-order property/value table for a finished run."""
    run_dir = pathlib.Path(run_dir)
    mpath = run_dir / MANIFEST
    if not mpath.is_file():
        raise FileNotFoundError(f"missing manifest: {mpath}")
    try:
        json.loads(mpath.read_text(encoding="utf-8"))
        rep = json.loads((run_dir / REPORT).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupt run directory {run_dir}: {exc}") from None
    width = max(len(name) for name, _, _ in TABLE_ROWS)
    lines = [f"{'Property':<{width}}  Value"]
    for name, key, kind in TABLE_ROWS:
        lines.append(f"{name:<{width}}  {_fmt(rep.get(key), kind)}")
    return "\n".join(lines) + "\n"


def equity_svg(run_dir) -> str:
    import csv

    with open(pathlib.Path(run_dir) / "equity.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return svg.line_chart([r["date"] for r in rows], [float(r["equity"]) for r in rows],
                          "Cumulative Return Chart")

