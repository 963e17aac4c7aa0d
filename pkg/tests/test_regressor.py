import numpy as np
import pytest
from sklearn.base import clone

from wortsense.errors import ValidationError
from wortsense.regressor import LstmDensityRegressor


def toy_task(n=192, steps=12, features=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, steps, features))
    y = 1.5 * X[:, -1, 0] + 0.5
    return X, y


class TestSklearnSurface:
    def test_get_params_round_trip(self):
        reg = LstmDensityRegressor(lstm_dim=3, epochs=2)
        params = reg.get_params()
        assert params["lstm_dim"] == 3
        assert params["epochs"] == 2
        cloned = clone(reg)
        assert cloned.get_params() == params

    def test_set_params(self):
        reg = LstmDensityRegressor().set_params(epochs=1, learning_rate=0.5)
        assert reg.epochs == 1
        assert reg.learning_rate == 0.5

    def test_predict_before_fit(self):
        with pytest.raises(ValidationError):
            LstmDensityRegressor().predict(np.zeros((1, 5, 3)))


class TestFitPredict:
    def test_learns_toy_task(self):
        X, y = toy_task()
        reg = LstmDensityRegressor(lstm_dim=2, dense_dims=(8,), epochs=30,
                                   batch_size=32, learning_rate=3e-3)
        preds = reg.fit(X, y).predict(X)
        assert preds.shape == y.shape
        mse = float(np.mean((preds - y) ** 2))
        assert mse < 0.25 * float(np.var(y))
        assert reg.score(X, y) > 0.5

    def test_validation_data_drives_early_stop(self):
        X, y = toy_task(128)
        Xv, yv = toy_task(48, seed=1)
        reg = LstmDensityRegressor(lstm_dim=2, dense_dims=(4,), epochs=4, patience=1)
        reg.fit(X, y, X_val=Xv, y_val=yv)
        assert all(h.val_mse is not None for h in reg.history_)

    def test_deterministic(self):
        X, y = toy_task(64)
        a = LstmDensityRegressor(lstm_dim=2, dense_dims=(4,), epochs=2).fit(X, y)
        b = LstmDensityRegressor(lstm_dim=2, dense_dims=(4,), epochs=2).fit(X, y)
        assert np.array_equal(a.predict(X), b.predict(X))

    def test_shape_validation(self):
        reg = LstmDensityRegressor(epochs=1)
        with pytest.raises(ValidationError):
            reg.fit(np.zeros((4, 5)), np.zeros(4))
        with pytest.raises(ValidationError):
            reg.fit(np.zeros((4, 5, 3)), np.zeros(5))
        with pytest.raises(ValidationError):
            reg.fit(np.zeros((4, 5, 3)), np.zeros(4), X_val=np.zeros((2, 5, 3)))
