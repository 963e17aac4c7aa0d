"""From-scratch LSTM regressor: forward pass, BPTT gradients, Adam, training loop.

The network mirrors the reference architecture: a single LSTM layer whose
final hidden state feeds ReLU dense layers 128 -> 64 and a linear scalar
output. Everything is float64 numpy; gradients are exact analytic
derivatives of the mean-squared error and are cross-checked against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .validation import check_positive
from .windows import DataFrameWindow, WindowBatch


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults follow the reference network."""

    windowsize: int = 100
    totalfeatures: int = 5
    lstm_dim: int = 4
    dense_dims: tuple[int, ...] = (128, 64)
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dense_dims", tuple(int(d) for d in self.dense_dims))
        for name in ("windowsize", "totalfeatures", "lstm_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if any(d < 1 for d in self.dense_dims):
            raise ValidationError("dense_dims must all be >= 1")
        if self.output_dim != 1:
            raise ValidationError("this regressor emits a single density value")

    def layer_parameter_counts(self) -> dict[str, int]:
        """Closed-form parameter counts per layer."""
        d, f = self.lstm_dim, self.totalfeatures
        counts = {"lstm": 4 * d * (f + d + 1)}
        fan_in = d
        for k, width in enumerate(self.dense_dims):
            counts[f"dense{k}"] = fan_in * width + width
            fan_in = width
        counts["output"] = fan_in * self.output_dim + self.output_dim
        return counts

    def to_dict(self) -> dict:
        return {
            "windowsize": self.windowsize,
            "totalfeatures": self.totalfeatures,
            "lstm_dim": self.lstm_dim,
            "dense_dims": list(self.dense_dims),
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(
            windowsize=doc["windowsize"],
            totalfeatures=doc["totalfeatures"],
            lstm_dim=doc["lstm_dim"],
            dense_dims=tuple(doc["dense_dims"]),
            output_dim=doc["output_dim"],
        )


@dataclass
class ModelParams:
    """All trainable weights. Gate rows are stacked [input, forget, cell, output]."""

    lstm_W: np.ndarray                    # (4*dim, features)
    lstm_U: np.ndarray                    # (4*dim, dim)
    lstm_b: np.ndarray                    # (4*dim,)
    dense: tuple[tuple[np.ndarray, np.ndarray], ...]   # ((W, b), ...) incl. output layer

    def __post_init__(self):
        self.lstm_W = np.asarray(self.lstm_W, dtype=np.float64)
        self.lstm_U = np.asarray(self.lstm_U, dtype=np.float64)
        self.lstm_b = np.asarray(self.lstm_b, dtype=np.float64)
        self.dense = tuple(
            (np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for W, b in self.dense
        )
        four_d, f = self.lstm_W.shape
        if four_d % 4 or self.lstm_U.shape != (four_d, four_d // 4):
            raise ValidationError("inconsistent LSTM weight shapes")
        if self.lstm_b.shape != (four_d,):
            raise ValidationError("inconsistent LSTM bias shape")
        fan_in = four_d // 4
        for W, b in self.dense:
            if W.ndim != 2 or W.shape[1] != fan_in or b.shape != (W.shape[0],):
                raise ValidationError(
                    f"dense layer shape {W.shape} does not chain from width {fan_in}"
                )
            fan_in = W.shape[0]
        for name, arr in self.named_arrays():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite values in parameter {name}")

    @property
    def dim(self) -> int:
        return self.lstm_U.shape[1]

    @property
    def n_features(self) -> int:
        return self.lstm_W.shape[1]

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "lstm_W", self.lstm_W
        yield "lstm_U", self.lstm_U
        yield "lstm_b", self.lstm_b
        for k, (W, b) in enumerate(self.dense):
            yield f"dense{k}_W", W
            yield f"dense{k}_b", b

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.lstm_W.copy(), self.lstm_U.copy(), self.lstm_b.copy(),
            tuple((W.copy(), b.copy()) for W, b in self.dense),
        )

    def n_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_arrays())

    def matches_config(self, config: ModelConfig) -> bool:
        if self.dim != config.lstm_dim or self.n_features != config.totalfeatures:
            return False
        widths = [W.shape[0] for W, _ in self.dense]
        return widths == list(config.dense_dims) + [config.output_dim]


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights; forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    d, f = config.lstm_dim, config.totalfeatures

    def uniform(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, shape)

    lstm_W = uniform((4 * d, f), f)
    lstm_U = uniform((4 * d, d), d)
    lstm_b = np.zeros(4 * d)
    lstm_b[d:2 * d] = 1.0   # forget gate starts open to stabilize long sequences
    dense = []
    fan_in = d
    for width in list(config.dense_dims) + [config.output_dim]:
        dense.append((uniform((width, fan_in), fan_in), np.zeros(width)))
        fan_in = width
    params = ModelParams(lstm_W, lstm_U, lstm_b, tuple(dense))
    expected = config.layer_parameter_counts()
    got = {"lstm": lstm_W.size + lstm_U.size + lstm_b.size}
    for k, (W, b) in enumerate(params.dense[:-1]):
        got[f"dense{k}"] = W.size + b.size
    got["output"] = params.dense[-1][0].size + params.dense[-1][1].size
    if got != expected:
        raise AssertionError(f"parameter count mismatch: {got} != {expected}")
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _Cache:
    """Per-call intermediates needed by the backward pass."""

    __slots__ = ("X", "I", "F", "G", "O", "C_prev", "TC", "H_prev", "h_T",
                 "dense_pre", "dense_in")

    def __init__(self):
        self.dense_pre = []
        self.dense_in = []


def _forward_batch(params: ModelParams, X: np.ndarray, keep_cache: bool):
    B, T, F = X.shape
    d = params.dim
    XW = (X.reshape(B * T, F) @ params.lstm_W.T).reshape(B, T, 4 * d)
    U_T = params.lstm_U.T
    h = np.zeros((B, d))
    c = np.zeros((B, d))
    cache = _Cache() if keep_cache else None
    if keep_cache:
        cache.X = X
        cache.I = np.empty((T, B, d))
        cache.F = np.empty((T, B, d))
        cache.G = np.empty((T, B, d))
        cache.O = np.empty((T, B, d))
        cache.C_prev = np.empty((T, B, d))
        cache.TC = np.empty((T, B, d))
        cache.H_prev = np.empty((T, B, d))
    for t in range(T):
        z = XW[:, t, :] + h @ U_T + params.lstm_b
        i = _sigmoid(z[:, :d])
        f = _sigmoid(z[:, d:2 * d])
        g = np.tanh(z[:, 2 * d:3 * d])
        o = _sigmoid(z[:, 3 * d:])
        if keep_cache:
            cache.I[t] = i
            cache.F[t] = f
            cache.G[t] = g
            cache.O[t] = o
            cache.C_prev[t] = c
            cache.H_prev[t] = h
        c = f * c + i * g
        tc = np.tanh(c)
        if keep_cache:
            cache.TC[t] = tc
        h = o * tc
    a = h
    if keep_cache:
        cache.h_T = h
    for k, (W, b) in enumerate(params.dense):
        if keep_cache:
            cache.dense_in.append(a)
        pre = a @ W.T + b
        if k < len(params.dense) - 1:
            a = np.maximum(pre, 0.0)
            if keep_cache:
                cache.dense_pre.append(pre)
        else:
            a = pre
    return a[:, 0], cache


def _backward_batch(params: ModelParams, cache: _Cache, dpred: np.ndarray) -> dict[str, np.ndarray]:
    X = cache.X
    B, T, F = X.shape
    d = params.dim
    grads: dict[str, np.ndarray] = {}

    da = dpred[:, None]
    for k in range(len(params.dense) - 1, -1, -1):
        W, _ = params.dense[k]
        if k < len(params.dense) - 1:
            da = da * (cache.dense_pre[k] > 0)
        grads[f"dense{k}_W"] = da.T @ cache.dense_in[k]
        grads[f"dense{k}_b"] = da.sum(axis=0)
        da = da @ W

    dh = da
    dc = np.zeros((B, d))
    dZ = np.empty((T, B, 4 * d))
    for t in range(T - 1, -1, -1):
        i, f, g, o = cache.I[t], cache.F[t], cache.G[t], cache.O[t]
        tc = cache.TC[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dZ[t, :, :d] = (dc * g) * i * (1.0 - i)
        dZ[t, :, d:2 * d] = (dc * cache.C_prev[t]) * f * (1.0 - f)
        dZ[t, :, 2 * d:3 * d] = (dc * i) * (1.0 - g * g)
        dZ[t, :, 3 * d:] = do * o * (1.0 - o)
        dh = dZ[t] @ params.lstm_U
        dc = dc * f
    flat_dZ = dZ.reshape(T * B, 4 * d)
    grads["lstm_W"] = flat_dZ.T @ X.transpose(1, 0, 2).reshape(T * B, F)
    grads["lstm_U"] = flat_dZ.T @ cache.H_prev.reshape(T * B, d)
    grads["lstm_b"] = flat_dZ.sum(axis=0)
    return grads


def _check_input(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != params.n_features:
        raise ValidationError(
            f"expected windows of shape (batch, steps, {params.n_features}), got {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError("window input contains non-finite values")
    return X


def forward(params: ModelParams, window: np.ndarray) -> tuple[float, _Cache]:
    """Prediction for a single window; the cache feeds the backward pass."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValidationError(f"window must be 2-D, got shape {window.shape}")
    X = _check_input(params, window[None, :, :])
    preds, cache = _forward_batch(params, X, keep_cache=True)
    return float(preds[0]), cache


def predict(params: ModelParams, X: np.ndarray, chunk_size: int = 512) -> np.ndarray:
    """Predictions for a stacked window tensor, evaluated in chunks."""
    X = _check_input(params, X)
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], chunk_size):
        hi = min(lo + chunk_size, X.shape[0])
        out[lo:hi], _ = _forward_batch(params, X[lo:hi], keep_cache=False)
    return out


def loss_and_grads(
    params: ModelParams, X: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-squared error over the batch and its exact gradients."""
    X = _check_input(params, X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValidationError("empty batch")
    if y.shape != (X.shape[0],):
        raise ValidationError(f"targets shape {y.shape} does not match batch {X.shape[0]}")
    preds, cache = _forward_batch(params, X, keep_cache=True)
    # overflow to inf is deliberate here: callers guard on finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        residual = preds - y
        mse = float(np.mean(residual * residual))
        dpred = 2.0 * residual / X.shape[0]
        grads = _backward_batch(params, cache, dpred)
    return mse, grads


def predict_series(
    params: ModelParams, windows: Sequence[DataFrameWindow]
) -> list[tuple[int, float]]:
    """Per-window predictions for one run, in step order."""
    if not windows:
        return []
    runs = {w.source_run for w in windows}
    if len(runs) > 1:
        raise ValidationError(f"windows come from multiple runs: {sorted(runs)}")
    starts = [w.start_step for w in windows]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ValidationError("windows must be ordered by strictly increasing start step")
    X = np.stack([w.features for w in windows])
    preds = predict(params, X)
    return [(int(s), float(p)) for s, p in zip(starts, preds)]


# ---------------------------------------------------------------------------
# Optimizers and the training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "mse"
    shuffle_seed: int = 0
    patience: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        check_positive("batch_size", self.batch_size)
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.loss != "mse":
            raise ValidationError("only mean-squared-error loss is supported")


class Adam:
    """Standard Adam with bias correction, applied in a fixed parameter order."""

    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, arr in params.named_arrays():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        for name, arr in params.named_arrays():
            arr -= self.lr * grads[name]


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float | None


def batch_mse(params: ModelParams, batch: WindowBatch, chunk_size: int = 512) -> float:
    preds = predict(params, batch.features, chunk_size)
    residual = preds - batch.targets
    return float(np.mean(residual * residual))


def train(
    params: ModelParams,
    train_batch: WindowBatch,
    val_batch: WindowBatch | None,
    tconfig: TrainConfig,
) -> tuple[ModelParams, list[EpochStats]]:
    """Minibatch training; returns the best-validation params and the loss history.

    Deterministic for a fixed shuffle seed. Raises NumericalError as soon as
    a loss or update stops being finite.
    """
    if train_batch.n_windows == 0:
        raise ValidationError("training batch is empty")
    if val_batch is not None and val_batch.n_windows and \
            train_batch.norm_stats != val_batch.norm_stats:
        raise ValidationError("train/val batches were normalized with different stats")
    params = params.copy()
    if tconfig.optimizer == "adam":
        optimizer = Adam(params, tconfig.learning_rate, tconfig.beta1, tconfig.beta2, tconfig.eps)
    else:
        optimizer = Sgd(tconfig.learning_rate)
    rng = np.random.default_rng(tconfig.shuffle_seed)
    n = train_batch.n_windows
    use_val = val_batch is not None and val_batch.n_windows > 0

    best_params = params.copy()
    best_loss = np.inf
    stale = 0
    history: list[EpochStats] = []
    for epoch in range(tconfig.epochs):
        order = rng.permutation(n)
        sq_sum = 0.0
        for bi, lo in enumerate(range(0, n, tconfig.batch_size)):
            idx = order[lo:lo + tconfig.batch_size]
            loss, grads = loss_and_grads(params, train_batch.features[idx],
                                         train_batch.targets[idx])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch} batch {bi}")
            optimizer.step(params, grads)
            sq_sum += loss * idx.size
        train_mse = sq_sum / n
        val_mse = batch_mse(params, val_batch) if use_val else None
        if val_mse is not None and not np.isfinite(val_mse):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochStats(epoch, train_mse, val_mse))
        monitored = val_mse if use_val else train_mse
        if monitored < best_loss:
            best_loss = monitored
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale > tconfig.patience:
                break
    return best_params, history
