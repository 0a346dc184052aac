"""Central finite-difference gradient of the batch MSE, via the reference forward loop."""

import numpy as np

from momentum_workbench.predictor import LstmParams, lstm_forward


def batch_loss(params: LstmParams, windows, labels) -> float:
    preds = np.array([lstm_forward(params, w)[0] for w in windows])
    return float(np.mean((preds - np.asarray(labels)) ** 2))


def _stacked_losses(thetas, hidden_dim, input_dim, windows, labels):
    """Batch MSE for each row of ``thetas`` (P, n_params), written out gate by gate."""
    H, D = hidden_dim, input_dim
    P = len(thetas)
    o = 0
    W = thetas[:, o:o + 4 * H * D].reshape(P, 4, H, D)
    o += 4 * H * D
    U = thetas[:, o:o + 4 * H * H].reshape(P, 4, H, H)
    o += 4 * H * H
    b = thetas[:, o:o + 4 * H].reshape(P, 4, H)
    o += 4 * H
    w_out = thetas[:, o:o + H]
    b_out = thetas[:, o + H]
    x = np.asarray(windows)                      # (B, T, D)
    B, T, _ = x.shape
    h = np.zeros((P, B, H))
    c = np.zeros((P, B, H))
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    for t in range(T):
        pre = (np.einsum("pkhd,bd->pkbh", W, x[:, t]) + np.einsum("pkhj,pbj->pkbh", U, h)
               + b[:, :, None, :])
        i, f, og, g = sig(pre[:, 0]), sig(pre[:, 1]), sig(pre[:, 2]), np.tanh(pre[:, 3])
        c = f * c + i * g
        h = og * np.tanh(c)
    pred = np.einsum("pbh,ph->pb", h, w_out) + b_out[:, None]
    return np.mean((pred - np.asarray(labels)[None]) ** 2, axis=1)


def fd_gradient(params: LstmParams, windows, labels, step=1e-5) -> np.ndarray:
    base = params.flat
    n = base.size
    up = np.tile(base, (n, 1)) + step * np.eye(n)
    dn = np.tile(base, (n, 1)) - step * np.eye(n)
    lp = _stacked_losses(up, params.hidden_dim, params.input_dim, windows, labels)
    lm = _stacked_losses(dn, params.hidden_dim, params.input_dim, windows, labels)
    return (lp - lm) / (2 * step)


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def gradient_case(seed: int, hidden_dim: int):
    """Random (params, windows, labels) with batch size 1..3 for the oracle."""
    rng = np.random.default_rng([seed, hidden_dim])
    batch = int(rng.integers(1, 4))
    params = LstmParams.initialize(hidden_dim, seed, init_scale=0.5, forget_bias_offset=1.0)
    windows = rng.standard_normal((batch, 10, 6))
    labels = rng.standard_normal(batch)
    return params, windows, labels
