import json
import os
import subprocess
import sys

import numpy as np
import pytest

from momentum_workbench import _accel, _kernels
from momentum_workbench.dataset import Dataset, Sample, Scaler
from momentum_workbench.predictor import (
    LstmParams,
    PredictorHandle,
    TrainConfig,
    TrainingDivergedError,
    baseline_handle,
    load_checkpoint,
    lstm_forward,
    lstm_grad,
    mse_loss,
    predict,
    save_checkpoint,
    train,
)
from oracles.lstm_oracle import _stacked_losses, batch_loss, fd_gradient, gradient_case, relative_error

GRAD_SEEDS = range(20)


@pytest.mark.parametrize("hidden_dim", [1, 2, 4])
@pytest.mark.parametrize("seed", GRAD_SEEDS)
def test_bptt_matches_finite_differences(seed, hidden_dim):
    params, windows, labels = gradient_case(seed, hidden_dim)
    analytic = lstm_grad(params, (windows, labels)).flat
    numeric = fd_gradient(params, windows, labels, step=1e-5)
    err = relative_error(analytic, numeric)
    assert err.max() < 1e-4, (int(err.argmax()), float(err.max()))


def test_oracle_forward_agrees_with_reference_loop():
    params, windows, labels = gradient_case(0, 3)
    stacked = _stacked_losses(params.flat[None], 3, 6, windows, labels)[0]
    assert stacked == pytest.approx(batch_loss(params, windows, labels), rel=1e-13)


def test_reference_forward_by_hand_h1():
    # one hidden unit, one step: every gate computed explicitly
    p = LstmParams.zeros(1, 1)
    p.W_i[:] = 0.5
    p.W_f[:] = -0.3
    p.W_o[:] = 0.2
    p.W_g[:] = 0.7
    p.b_g[:] = 0.1
    p.w_out[:] = 2.0
    p.b_out[:] = -0.5
    x = 0.8
    sig = lambda z: 1 / (1 + np.exp(-z))
    c = sig(0.5 * x) * np.tanh(0.7 * x + 0.1)
    want = 2.0 * sig(0.2 * x) * np.tanh(c) - 0.5
    got, trace = lstm_forward(p, [[x]])
    assert got == pytest.approx(want, rel=1e-15)
    assert len(trace.h) == 2 and np.all(trace.h[0] == 0)


def test_kernels_agree_with_reference_forward():
    rng = np.random.default_rng(0)
    p = LstmParams.initialize(5, 1, init_scale=0.3)
    w = rng.standard_normal((7, 10, 6))
    ref = np.array([lstm_forward(p, x)[0] for x in w])
    X = np.ascontiguousarray(w.transpose(1, 0, 2))
    np.testing.assert_allclose(_kernels.forward_np(p.flat, X, 5)[0], ref, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(_kernels.forward(p.flat, X, 5), ref, rtol=1e-12, atol=1e-14)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not available")
def test_numba_and_numpy_backends_agree():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((10, 16, 6))
    y = rng.standard_normal(16) * 0.01
    p = LstmParams.initialize(8, 2).flat
    l_np, g_np, _ = _kernels.loss_grad_np(p, X, y, 8)
    l_nb, g_nb, _ = _kernels.loss_grad_nb(p, X, y, 8)
    assert l_nb == pytest.approx(l_np, rel=1e-12)
    np.testing.assert_allclose(g_nb, g_np, rtol=1e-9, atol=1e-15)
    f_np, losses_np, _ = (lambda q: (q, *_kernels.train_np(q, X, y, 8, 30, 1e-2, .9, .999, 1e-8, 5.)))(p.copy())
    f_nb, losses_nb, _ = (lambda q: (q, *_kernels.train_nb(q, X, y, 8, 30, 1e-2, .9, .999, 1e-8, 5.)))(p.copy())
    np.testing.assert_allclose(f_nb, f_np, rtol=1e-9, atol=1e-13)
    np.testing.assert_allclose(losses_nb, losses_np, rtol=1e-9)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, MOMENTUM_WORKBENCH_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c",
                          "from momentum_workbench import _accel; print(_accel.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def _planted_dataset(n=240, seed=0, noise=0.0):
    """Label is a fixed linear function of the last window row."""
    rng = np.random.default_rng(seed)
    windows = rng.standard_normal((n, 10, 6))
    beta = np.array([0.5, -0.3, 0.2, 0.0, 0.1, 0.0])
    labels = windows[:, -1] @ beta * 0.1 + noise * rng.standard_normal(n)
    samples = [Sample("X", i, w, float(y)) for i, (w, y) in enumerate(zip(windows, labels))]
    return Dataset(samples, Scaler.identity())


def test_learns_planted_linear_signal():
    ds = _planted_dataset()
    handle, losses = train(ds, TrainConfig(epochs=300, learning_rate=1e-2, hidden_dim=8, seed=1))
    assert losses[-1] < 0.05 * losses[0]
    test = _planted_dataset(100, seed=9)
    pred = predict(handle, test.windows)
    assert np.corrcoef(pred, test.labels)[0, 1] > 0.95


def test_first_epoch_decreases_loss():
    ds = _planted_dataset(60)
    for seed in range(5):
        _, losses = train(ds, TrainConfig(epochs=1, learning_rate=1e-3, hidden_dim=4, seed=seed))
        assert losses[1] < losses[0]


def test_prediction_depends_on_time_order():
    rng = np.random.default_rng(3)
    p = LstmParams.initialize(6, 0, init_scale=0.5)
    w = rng.standard_normal((10, 6))
    assert lstm_forward(p, w)[0] != pytest.approx(lstm_forward(p, w[::-1])[0], abs=1e-9)


def test_training_is_deterministic():
    ds = _planted_dataset(80)
    cfg = TrainConfig(epochs=20, hidden_dim=4, seed=77)
    h1, l1 = train(ds, cfg)
    h2, l2 = train(ds, cfg)
    assert np.array_equal(h1.lstm.flat, h2.lstm.flat)
    assert np.array_equal(l1, l2)
    h3, _ = train(ds, TrainConfig(epochs=20, hidden_dim=4, seed=78))
    assert not np.array_equal(h1.lstm.flat, h3.lstm.flat)


def test_minibatch_mode_runs_and_differs_from_full_batch():
    ds = _planted_dataset(50)
    full, _ = train(ds, TrainConfig(epochs=5, hidden_dim=3, seed=1))
    mini, losses = train(ds, TrainConfig(epochs=5, hidden_dim=3, seed=1, batch=16))
    assert np.all(np.isfinite(losses))
    assert not np.array_equal(full.lstm.flat, mini.lstm.flat)


def test_divergence_raises():
    ds = _planted_dataset(20)
    bad = Dataset([Sample("X", 0, ds.samples[0].window, float("nan"))] + ds.samples[1:], ds.scaler)
    with pytest.raises(TrainingDivergedError, match="epoch 0"):
        train(bad, TrainConfig(epochs=3, hidden_dim=2))


def test_init_and_forget_bias():
    p = LstmParams.initialize(4, 5, init_scale=0.08, forget_bias_offset=1.0)
    others = np.concatenate([p.W_i.ravel(), p.U_g.ravel(), p.b_i, p.w_out])
    assert np.all(np.abs(others) <= 0.08)
    assert np.all((p.b_f >= 0.92) & (p.b_f <= 1.08))


def test_checkpoint_round_trip(tmp_path):
    ds = _planted_dataset(30)
    handle, _ = train(ds, TrainConfig(epochs=3, hidden_dim=3, seed=2))
    path = tmp_path / "ckpt.json"
    save_checkpoint(handle, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.lstm.flat, handle.lstm.flat)
    assert back.config == handle.config
    assert np.array_equal(predict(back, ds.windows), predict(handle, ds.windows))
    data = json.loads(path.read_text())
    data["schema_version"] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="schema"):
        load_checkpoint(path)


def test_baselines():
    rng = np.random.default_rng(0)
    sc = Scaler(rng.standard_normal(6), rng.uniform(0.5, 2, 6), np.zeros(6, bool))
    raw = rng.standard_normal((4, 10, 6))
    z = sc.transform(raw)
    np.testing.assert_allclose(predict(baseline_handle("persistence", sc), z), raw[:, -1, 1],
                               rtol=1e-12)
    assert predict(baseline_handle("zero", sc), z).tolist() == [0.0] * 4


def test_mse_loss_errors():
    assert mse_loss([1, 2], [1, 4]) == 2.0
    with pytest.raises(ValueError):
        mse_loss([1], [1, 2])
    with pytest.raises(ValueError):
        mse_loss([], [])


def test_train_config_strict():
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"epoch": 3})
    cfg = TrainConfig(epochs=7, batch=4)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        PredictorHandle("lstm", Scaler.identity())
