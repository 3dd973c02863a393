"""Central finite-difference gradient checking on 64-bit shadow copies."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .model import Model, ModelParams, backward, loss


def numeric_gradient(loss_fn: Callable[[ModelParams], float], params: ModelParams, h=1e-3):
    """Central differences of ``loss_fn`` w.r.t. every entry of every tensor."""
    base = params.as_float64()
    grads = {}
    for name in base:
        flat = base[name].reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(base)
            flat[i] = orig - h
            down = loss_fn(base)
            flat[i] = orig
            g[i] = (up - down) / (2 * h)
        grads[name] = g.reshape(base[name].shape)
    return grads


def relative_error(analytic, numeric) -> float:
    """``||a - n|| / (||a|| + ||n||)``; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check_model_gradients(model: Model, x, targets, weights=None, h=1e-3) -> dict[str, float]:
    """Per-tensor relative error between backprop and finite differences."""
    shadow = Model(model.net, model.params.as_float64())
    analytic = backward(shadow, x, targets, weights)
    numeric = numeric_gradient(lambda p: loss(Model(model.net, p), x, targets, weights), shadow.params, h)
    return {k: relative_error(analytic[k], numeric[k]) for k in analytic}
