"""Scikit-learn style wrapper around the LSTM core.

Accepts window tensors of shape ``(n_windows, windowsize, n_features)``;
targets are raw °Plato. Composes with sklearn tooling (``get_params``,
``clone``, pipelines) while all of the math lives in :mod:`wortsense.net`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import net
from .errors import ValidationError
from .validation import check_window_array
from .windows import WindowBatch


def _as_batch(X: np.ndarray, y: np.ndarray) -> WindowBatch:
    return WindowBatch(
        features=X,
        targets=y,
        run_ids=[""] * X.shape[0],
        start_steps=np.arange(X.shape[0], dtype=np.int64),
        feature_names=tuple(f"f{i}" for i in range(X.shape[2])),
    )


class LstmDensityRegressor(RegressorMixin, BaseEstimator):
    """LSTM + dense-head regressor predicting one density value per window."""

    def __init__(
        self,
        lstm_dim: int = 4,
        dense_dims: tuple[int, ...] = (128, 64),
        epochs: int = 50,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        patience: int = 10,
        shuffle_seed: int = 0,
        init_seed: int = 0,
    ):
        self.lstm_dim = lstm_dim
        self.dense_dims = dense_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.patience = patience
        self.shuffle_seed = shuffle_seed
        self.init_seed = init_seed

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_window_array("X", X)
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise ValidationError(f"y shape {y.shape} does not match {X.shape[0]} windows")
        if (X_val is None) != (y_val is None):
            raise ValidationError("X_val and y_val must be given together")
        self.config_ = net.ModelConfig(
            windowsize=X.shape[1],
            totalfeatures=X.shape[2],
            lstm_dim=self.lstm_dim,
            dense_dims=tuple(self.dense_dims),
        )
        tconfig = net.TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            shuffle_seed=self.shuffle_seed,
            patience=self.patience,
        )
        val_batch = None
        if X_val is not None:
            X_val = check_window_array("X_val", X_val)
            y_val = np.asarray(y_val, dtype=np.float64)
            val_batch = _as_batch(X_val, y_val)
        params = net.init_params(self.config_, self.init_seed)
        self.params_, self.history_ = net.train(params, _as_batch(X, y), val_batch, tconfig)
        self.n_features_in_ = X.shape[2]
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise ValidationError("regressor is not fitted")
        return net.predict(self.params_, X)
