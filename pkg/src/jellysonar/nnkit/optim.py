"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(
            0,
            {k: np.zeros(params[k].shape) for k in params},
            {k: np.zeros(params[k].shape) for k in params},
        )


def adam_step(params: ModelParams, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update.  Returns ``(new_params, new_state)``; inputs are untouched.

    Moments are kept in float64; parameters keep their storage dtype.
    """
    if set(grads) != set(params):
        raise ValueError("gradient names do not match parameter names")
    if state.step and set(state.m) != set(params):
        raise ValueError("optimizer state does not match parameters")
    t = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k in params:
        p = params[k]
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(k, np.zeros(p.shape))
        v = state.v.get(k, np.zeros(p.shape))
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"{k}: optimizer state shape mismatch")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params[k] = (p.astype(np.float64) - update).astype(p.dtype)
        m_new[k], v_new[k] = m, v
    return ModelParams(new_params, dtype=None), AdamState(t, m_new, v_new)
