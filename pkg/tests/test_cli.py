import json
import shutil

import pytest

from momentum_workbench import cli, pipeline
from momentum_workbench.config import ConfigError, RunConfig

TABLE = ["Start Date", "End Date", "Market Days", "In the Market Days", "Position Qualified",
         "Commision", "Equity Initial", "Equity Final", "Return", "Ann. Return", "Win Rate",
         "Max. Drawdown"]

FAST_LSTM = {"epochs": 3, "hidden_dim": 4}


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return path


@pytest.fixture
def golden_cfg(tmp_path, fixtures_dir):
    data = tmp_path / "data"
    shutil.copytree(fixtures_dir / "golden_universe", data)
    return write_config(tmp_path / "cfg.json", data_source={"csv_dir": "data"}, lstm=FAST_LSTM,
                        horizon_decay=False, workers=1, output_dir=str(tmp_path / "run"))


def test_generate_counts_and_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", data_source={"synthetic": {"n_tickers": 3, "n_days": 400}})
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    files = sorted((tmp_path / "a" / "data").glob("*.csv"))
    assert len(files) == 3
    for f in files:
        assert len(f.read_text().splitlines()) == 401
        assert f.read_bytes() == (tmp_path / "b" / "data" / f.name).read_bytes()


def test_generate_warns_below_sample_minimum(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", data_source={"synthetic": {"n_days": 30}})
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "31" in capsys.readouterr().err


def test_generate_needs_synthetic_source(tmp_path):
    cfg = write_config(tmp_path / "c.json", data_source={"csv_dir": "x"})
    assert cli.main(["generate", "--config", str(cfg)]) == 1


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["run"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 1
    cfg = write_config(tmp_path / "c.json", train_sise=240)
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert "train_sise" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_data_error_exit_2(tmp_path, capsys):
    data = tmp_path / "data"
    data.mkdir()
    (data / "BAD.csv").write_text("date,open,high,low,close,volume\n2020-01-02,1,1,1,-1,5\n")
    cfg = write_config(tmp_path / "c.json", data_source={"csv_dir": "data"})
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "market-data" in capsys.readouterr().err


def test_insufficient_history_exit_2(tmp_path):
    cfg = write_config(tmp_path / "c.json", data_source={"synthetic": {"n_days": 100}})
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_numeric_error_exit_3(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise pipeline.StageError("predictor", FloatingPointError("nan loss"), "AAA", 4)

    monkeypatch.setattr(pipeline, "run_pipeline", boom)
    cfg = write_config(tmp_path / "c.json")
    assert cli.main(["run", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "predictor" in err and "AAA" in err and "fold=4" in err


def test_report_missing_manifest_exit_2(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == 2
    assert "manifest" in capsys.readouterr().err


def test_zero_predictor_run(golden_cfg, tmp_path, capsys):
    out = tmp_path / "zero"
    assert cli.main(["run", "--config", str(golden_cfg), "--out", str(out),
                     "--predictor", "zero"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["total_return"] == 0.0
    assert rep["equity_final"] == rep["equity_initial"] == 1_000_000.0
    assert rep["win_rate"] is None
    capsys.readouterr()
    assert cli.main(["report", str(out), "--svg", str(tmp_path / "eq.svg")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split("  ")[0].strip() for ln in lines[1:]] == TABLE
    assert lines[TABLE.index("Win Rate") + 1].split()[-1] == "n/a"
    assert (tmp_path / "eq.svg").read_text().startswith("<svg")


def test_golden_run_outputs_and_byte_identity(golden_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(golden_cfg), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(golden_cfg), "--out", str(b)]) == 0
    for rel in ["report.json", "equity.csv", "trades.csv", "predictions.csv",
                "analysis/summary.json", "analysis/groups.csv", "checkpoints/GLD000/fold_000.json"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["config"]["lstm"]["epochs"] == 3
    assert set(manifest["files"]) >= {"report.json", "equity.csv", "trades.csv"}
    # 270 samples per ticker -> 3 folds each
    assert len(list((a / "checkpoints" / "GLD001").glob("fold_*.json"))) == 3
    assert len(list((a / "folds" / "GLD002").glob("fold_*.json"))) == 3
    assert (a / "features" / "GLD000.csv").exists()


def test_run_does_not_touch_inputs(golden_cfg, tmp_path):
    data = tmp_path / "data"
    before = {p.name: p.read_bytes() for p in data.iterdir()}
    assert cli.main(["run", "--config", str(golden_cfg), "--predictor", "persistence",
                     "--out", str(tmp_path / "o")]) == 0
    assert {p.name: p.read_bytes() for p in data.iterdir()} == before


def test_config_defaults_and_round_trip(tmp_path):
    cfg = RunConfig()
    assert (cfg.train_size, cfg.horizon, cfg.window_len, cfg.group_len) == (240, 10, 10, 84)
    assert cfg.equity_initial == 1_000_000 and cfg.commission_rate == 0.0001
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"lstm": {"epochz": 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"filter": {"no_trade_band": 0.001, "shrink_constant": 0.01}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"data_source": {"csv_dir": "a", "synthetic": {}}})
