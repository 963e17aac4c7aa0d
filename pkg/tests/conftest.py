"""Shared test helpers: reference implementations kept deliberately naive."""

import math

import numpy as np

from wortsense import net


def oracle_forward(params, window):
    """Plain-loop reference for the recurrence, one gate element at a time.

    Intentionally avoids matrix products so it cannot share a code path
    (or a bug) with the production implementation.
    """

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    d = params.dim
    n_in = params.n_features
    W, U, b = params.lstm_W, params.lstm_U, params.lstm_b
    h = [0.0] * d
    c = [0.0] * d
    for t in range(window.shape[0]):
        x = window[t]
        z = [
            b[r]
            + sum(W[r, j] * x[j] for j in range(n_in))
            + sum(U[r, k] * h[k] for k in range(d))
            for r in range(4 * d)
        ]
        i = [sig(z[r]) for r in range(d)]
        f = [sig(z[d + r]) for r in range(d)]
        g = [math.tanh(z[2 * d + r]) for r in range(d)]
        o = [sig(z[3 * d + r]) for r in range(d)]
        c = [f[r] * c[r] + i[r] * g[r] for r in range(d)]
        h = [o[r] * math.tanh(c[r]) for r in range(d)]
    a = h
    for k, (Wd, bd) in enumerate(params.dense):
        pre = [
            bd[r] + sum(Wd[r, j] * a[j] for j in range(len(a)))
            for r in range(Wd.shape[0])
        ]
        a = [max(p, 0.0) for p in pre] if k < len(params.dense) - 1 else pre
    return a[0]


def max_gradient_rel_error(params, X, y, eps=1e-5):
    """Worst relative disagreement between analytic and central-difference grads."""
    _, grads = net.loss_and_grads(params, X, y)
    worst = 0.0
    for name, arr in params.named_arrays():
        grad = grads[name]
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            plus, _ = net.loss_and_grads(params, X, y)
            arr[idx] = orig - eps
            minus, _ = net.loss_and_grads(params, X, y)
            arr[idx] = orig
            numeric = (plus - minus) / (2.0 * eps)
            analytic = grad[idx]
            rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-12)
            worst = max(worst, rel)
            it.iternext()
    return worst
