"""Single-layer LSTM regressor with BPTT gradients, plus trivial baselines.

The batched loss/gradient and the Adam loop run in ``_kernels`` (numba or
numpy). ``lstm_forward`` here is a deliberately plain per-window loop over
named gate matrices; it is what tests use as the reference forward pass.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping

import numpy as np

from momentum_workbench import _kernels
from momentum_workbench.dataset import Dataset, Scaler
from momentum_workbench.features import N_FEATURES, RET_MOMENTUM

SCHEMA_VERSION = 1
GATES = ("i", "f", "o", "g")
PARAM_FIELDS = (
    "W_i", "W_f", "W_o", "W_g",
    "U_i", "U_f", "U_o", "U_g",
    "b_i", "b_f", "b_o", "b_g",
    "w_out", "b_out",
)
PREDICTOR_KINDS = ("lstm", "persistence", "zero")


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LstmParams:
    """All trainable weights, stored as one flat vector.

    The named fields (``W_i`` ... ``b_out``) are views into ``flat``; gate
    blocks are stacked in i, f, o, g order.
    """

    hidden_dim: int
    flat: np.ndarray
    input_dim: int = N_FEATURES

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.shape != (_kernels.param_count(self.hidden_dim, self.input_dim),):
            raise ValueError(
                f"flat parameter vector has shape {flat.shape}, expected "
                f"({_kernels.param_count(self.hidden_dim, self.input_dim)},)"
            )
        object.__setattr__(self, "flat", flat)

    @classmethod
    def zeros(cls, hidden_dim: int, input_dim: int = N_FEATURES) -> "LstmParams":
        return cls(hidden_dim, np.zeros(_kernels.param_count(hidden_dim, input_dim)), input_dim)

    @classmethod
    def initialize(cls, hidden_dim: int, seed: int, init_scale: float = 0.08,
                   forget_bias_offset: float = 1.0, input_dim: int = N_FEATURES) -> "LstmParams":
        rng = np.random.default_rng(seed)
        flat = rng.uniform(-init_scale, init_scale, _kernels.param_count(hidden_dim, input_dim))
        p = cls(hidden_dim, flat, input_dim)
        p.b_f[:] += forget_bias_offset
        return p

    @classmethod
    def from_fields(cls, **arrays) -> "LstmParams":
        hidden_dim = len(np.atleast_1d(arrays["w_out"]))
        input_dim = np.asarray(arrays["W_i"]).reshape(hidden_dim, -1).shape[1]
        p = cls.zeros(hidden_dim, input_dim)
        for name in PARAM_FIELDS:
            getattr(p, name)[...] = np.asarray(arrays[name], dtype=np.float64).reshape(
                getattr(p, name).shape)
        return p

    def _views(self):
        return _kernels.split_params(self.flat, self.hidden_dim, self.input_dim)

    def _gate(self, block, k):
        H = self.hidden_dim
        return block[k * H:(k + 1) * H]

    W_i = property(lambda s: s._gate(s._views()[0], 0))
    W_f = property(lambda s: s._gate(s._views()[0], 1))
    W_o = property(lambda s: s._gate(s._views()[0], 2))
    W_g = property(lambda s: s._gate(s._views()[0], 3))
    U_i = property(lambda s: s._gate(s._views()[1], 0))
    U_f = property(lambda s: s._gate(s._views()[1], 1))
    U_o = property(lambda s: s._gate(s._views()[1], 2))
    U_g = property(lambda s: s._gate(s._views()[1], 3))
    b_i = property(lambda s: s._gate(s._views()[2], 0))
    b_f = property(lambda s: s._gate(s._views()[2], 1))
    b_o = property(lambda s: s._gate(s._views()[2], 2))
    b_g = property(lambda s: s._gate(s._views()[2], 3))
    w_out = property(lambda s: s._views()[3])
    b_out = property(lambda s: s._views()[4])

    def copy(self) -> "LstmParams":
        return LstmParams(self.hidden_dim, self.flat.copy(), self.input_dim)

    def to_dict(self) -> dict:
        out = {"hidden_dim": self.hidden_dim, "input_dim": self.input_dim}
        for name in PARAM_FIELDS:
            out[name] = [float(x) for x in np.ravel(getattr(self, name))]
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "LstmParams":
        p = cls.zeros(int(d["hidden_dim"]), int(d["input_dim"]))
        for name in PARAM_FIELDS:
            getattr(p, name)[...] = np.asarray(d[name], dtype=np.float64).reshape(
                getattr(p, name).shape)
        return p


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class Trace:
    """Per-step activations of one forward pass (step 0 is the zero state)."""

    inputs: np.ndarray
    i: list = field(default_factory=list)
    f: list = field(default_factory=list)
    o: list = field(default_factory=list)
    g: list = field(default_factory=list)
    c: list = field(default_factory=list)
    h: list = field(default_factory=list)


def lstm_forward(params: LstmParams, window) -> tuple[float, Trace]:
    """Run the cell over the rows of ``window`` from a zero state."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"window shape {x.shape} does not match input_dim={params.input_dim}")
    H = params.hidden_dim
    trace = Trace(inputs=x)
    c = np.zeros(H)
    h = np.zeros(H)
    trace.c.append(c)
    trace.h.append(h)
    for x_t in x:
        i = _sigmoid(params.W_i @ x_t + params.U_i @ h + params.b_i)
        f = _sigmoid(params.W_f @ x_t + params.U_f @ h + params.b_f)
        o = _sigmoid(params.W_o @ x_t + params.U_o @ h + params.b_o)
        g = np.tanh(params.W_g @ x_t + params.U_g @ h + params.b_g)
        c = f * c + i * g
        h = o * np.tanh(c)
        for name, val in zip("ifogch", (i, f, o, g, c, h)):
            getattr(trace, name).append(val)
    pred = float(params.w_out @ h + params.b_out[0])
    return pred, trace


def mse_loss(predictions, labels) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("mse of empty input")
    e = p - y
    return float(np.mean(e * e))


def _as_batch(batch, input_dim):
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 3:
        windows, labels = batch
    else:
        batch = list(batch)
        if not batch:
            raise ValueError("empty batch")
        windows = np.stack([np.asarray(w, dtype=np.float64) for w, _ in batch])
        labels = np.array([y for _, y in batch], dtype=np.float64)
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[2] != input_dim:
        raise ValueError(f"windows shape {windows.shape} does not match input_dim={input_dim}")
    if len(windows) == 0:
        raise ValueError("empty batch")
    return np.ascontiguousarray(windows.transpose(1, 0, 2)), np.asarray(labels, dtype=np.float64)


def lstm_loss_and_grad(params: LstmParams, batch) -> tuple[float, LstmParams]:
    X, y = _as_batch(batch, params.input_dim)
    loss, grad, _ = _kernels.loss_and_grad(params.flat, X, y, params.hidden_dim)
    return loss, LstmParams(params.hidden_dim, grad, params.input_dim)


def lstm_grad(params: LstmParams, batch) -> LstmParams:
    """Exact gradient of the batch MSE w.r.t. every parameter, as an ``LstmParams``."""
    return lstm_loss_and_grad(params, batch)[1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch: int | None = None
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init_scale: float = 0.08
    forget_bias_offset: float = 1.0
    grad_clip_norm: float = 5.0
    hidden_dim: int = 32

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be >= 1 or null for full batch")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PredictorHandle:
    kind: str
    scaler: Scaler
    lstm: LstmParams | None = None
    config: TrainConfig | None = None

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "lstm" and self.lstm is None:
            raise ValueError("lstm handle needs parameters")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "params": self.lstm.to_dict() if self.lstm is not None else None,
            "scaler": self.scaler.to_dict(),
            "config": self.config.to_dict() if self.config is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PredictorHandle":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported checkpoint schema {d.get('schema_version')!r}")
        return cls(
            kind=d["kind"],
            scaler=Scaler.from_dict(d["scaler"]),
            lstm=LstmParams.from_dict(d["params"]) if d.get("params") else None,
            config=TrainConfig.from_dict(d["config"]) if d.get("config") else None,
        )


def save_checkpoint(handle: PredictorHandle, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(handle.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> PredictorHandle:
    with open(path, encoding="utf-8") as fh:
        return PredictorHandle.from_dict(json.load(fh))


def train(dataset: Dataset, config: TrainConfig = TrainConfig()) -> tuple[PredictorHandle, np.ndarray]:
    """Fit an LSTM on a standardised dataset.

    Returns the handle and the loss trajectory (``epochs + 1`` entries: the
    loss before each update, then the final loss).
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y = _as_batch((dataset.windows, dataset.labels), N_FEATURES)
    init = LstmParams.initialize(config.hidden_dim, config.seed, config.init_scale,
                                 config.forget_bias_offset)
    n = len(y)
    if config.batch is None or config.batch >= n:
        flat, losses, failed = _kernels.train_adam(
            init.flat, X, y, config.hidden_dim, config.epochs, config.learning_rate,
            config.beta1, config.beta2, config.adam_eps, config.grad_clip_norm)
    else:
        flat, losses, failed = _train_minibatch(init.flat, X, y, config)
    if failed >= 0:
        raise TrainingDivergedError(
            f"non-finite training loss at epoch {failed} (loss={losses[failed]!r})"
        )
    params = LstmParams(config.hidden_dim, flat)
    return PredictorHandle("lstm", dataset.scaler, params, config), losses


def _train_minibatch(flat, X, y, config):
    # sequential, unshuffled chunks keep the run deterministic
    flat = flat.copy()
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    n = len(y)
    losses = np.full(config.epochs + 1, np.nan)
    step = 0
    for epoch in range(config.epochs):
        losses[epoch] = _kernels.loss_and_grad(flat, X, y, config.hidden_dim)[0]
        if not np.isfinite(losses[epoch]):
            return flat, losses, epoch
        for start in range(0, n, config.batch):
            sl = slice(start, start + config.batch)
            _, grad, _ = _kernels.loss_and_grad(flat, X[:, sl], y[sl], config.hidden_dim)
            if not np.all(np.isfinite(grad)):
                return flat, losses, epoch
            step += 1
            _kernels._adam_step(flat, grad, m, v, step, config.learning_rate, config.beta1,
                                config.beta2, config.adam_eps, config.grad_clip_norm)
    losses[-1] = _kernels.loss_and_grad(flat, X, y, config.hidden_dim)[0]
    return flat, losses, (-1 if np.isfinite(losses[-1]) else config.epochs)


def baseline_handle(kind: str, scaler: Scaler) -> PredictorHandle:
    return PredictorHandle(kind, scaler)


def predict(handle: PredictorHandle, windows) -> np.ndarray:
    """Scores for standardised windows of shape ``(n, T, 6)``.

    The windows must be standardised with ``handle.scaler``; a mismatch cannot
    be detected here.
    """
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim == 2:
        w = w[None]
    if len(w) == 0:
        return np.empty(0)
    if handle.kind == "zero":
        return np.zeros(len(w))
    if handle.kind == "persistence":
        col = w[:, -1, RET_MOMENTUM]
        return col * handle.scaler.scale[RET_MOMENTUM] + handle.scaler.mean[RET_MOMENTUM]
    X = np.ascontiguousarray(w.transpose(1, 0, 2))
    return np.asarray(_kernels.forward(handle.lstm.flat, X, handle.lstm.hidden_dim))


def fit_predictor(kind: str, dataset: Dataset, config: TrainConfig) -> tuple[PredictorHandle, np.ndarray | None]:
    if kind == "lstm":
        return train(dataset, config)
    return baseline_handle(kind, dataset.scaler), None

