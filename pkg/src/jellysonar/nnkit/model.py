"""Parameter containers, sequential networks, softmax and weighted cross-entropy."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ..core import N_CLASSES, seeded_rng
from .layers import Layer, Ragged

LOG_CLAMP = 1e-12


class ModelParams(Mapping):
    """Named tensors, iterated in lexicographic name order.

    Storage is float32 unless built from a 64-bit shadow copy
    (:meth:`as_float64`), which the finite-difference checks use.
    """

    def __init__(self, entries=None, dtype=np.float32):
        self._d = {}
        for name, arr in dict(entries or {}).items():
            if not isinstance(name, str) or not name:
                raise ValueError(f"parameter names must be non-empty strings, got {name!r}")
            self._d[name] = np.array(arr, dtype=dtype)

    def __getitem__(self, name):
        return self._d[name]

    def __iter__(self):
        return iter(sorted(self._d))

    def __len__(self):
        return len(self._d)

    def __repr__(self):
        body = ", ".join(f"{k}: {tuple(v.shape)}" for k, v in self.items())
        return f"ModelParams({body})"

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self._d.values()))

    def as_float64(self) -> "ModelParams":
        return ModelParams(self._d, dtype=np.float64)

    def copy(self) -> "ModelParams":
        return ModelParams(self._d, dtype=None)

    def replace(self, updates) -> "ModelParams":
        merged = dict(self._d)
        for k, v in updates.items():
            if k not in merged:
                raise KeyError(k)
            merged[k] = np.asarray(v, dtype=merged[k].dtype)
        return ModelParams(merged, dtype=None)

    def equal(self, other: "ModelParams") -> bool:
        """Bitwise equality of names, shapes, dtypes and contents."""
        if list(self) != list(other):
            return False
        return all(
            self[k].dtype == other[k].dtype
            and self[k].shape == other[k].shape
            and self[k].tobytes() == other[k].tobytes()
            for k in self
        )


class Sequential:
    """A fixed chain of layers with a declared per-sample input shape.

    ``input_shape`` excludes the batch axis.  For :class:`Ragged` inputs it is
    ``(channels,)``.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape
        names = [n for layer in self.layers for n in layer.param_shapes()]
        if len(names) != len(set(names)):
            raise ValueError("duplicate parameter names in network")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for layer in self.layers:
            shapes.update(layer.param_shapes())
        return shapes

    def init(self, seed) -> ModelParams:
        rng = seed if isinstance(seed, np.random.Generator) else seeded_rng(seed)
        entries = {}
        for layer in self.layers:
            entries.update(layer.init(rng))
        return ModelParams(entries)

    def _check_input(self, x):
        if isinstance(x, Ragged):
            got = x.values.shape[1:]
        else:
            got = x.shape[1:]
        if tuple(got) != self.input_shape:
            raise ValueError(f"input shape {tuple(got)} does not match model input {self.input_shape}")

    def _compute_params(self, params):
        missing = set(self.param_shapes()) - set(params)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        return {k: np.asarray(params[k], dtype=np.float64) for k in self.param_shapes()}

    def forward(self, params, x):
        """Network output for a batch (no caches kept)."""
        y, _ = self.forward_train(params, x)
        return y

    def forward_train(self, params, x):
        self._check_input(x)
        p = self._compute_params(params)
        if not isinstance(x, Ragged):
            x = np.asarray(x, dtype=np.float64)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(p, x)
            caches.append(cache)
        return x, (p, caches)

    def backward(self, state, dy) -> tuple[object, dict[str, np.ndarray]]:
        """Backpropagate ``dy``; returns ``(d_input, grads)`` with float64 grads."""
        p, caches = state
        grads: dict[str, np.ndarray] = {}
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, g = layer.backward(p, cache, dy)
            grads.update(g)
        return dy, grads


@dataclass
class Model:
    """An architecture bound to its parameters."""

    net: Sequential
    params: ModelParams


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction; rejects NaN."""
    z = np.asarray(logits, dtype=np.float64)
    if np.isnan(z).any():
        raise ValueError("softmax input contains NaN")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_weights(x: float = 1.0, y: float = 1.0) -> np.ndarray:
    """Per-class weights: Jellyfish gets ``x``, Seaweed ``y``, the rest 1."""
    w = np.ones(N_CLASSES)
    w[1], w[4] = x, y
    return check_weights(w)


def check_weights(weights) -> np.ndarray:
    w = np.ones(N_CLASSES) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (N_CLASSES,) or np.any(~(w > 0)):
        raise ValueError(f"loss weights must be {N_CLASSES} positive reals, got {weights}")
    return w


def weighted_cross_entropy(probs, target, weights=None) -> float:
    """``-w[t] * log(p[t])``, averaged over a batch.

    ``probs`` may be one vector or an ``(N, 6)`` batch.  ``p[t]`` is clamped to
    1e-12 before the log so saturated predictions give a finite loss.
    """
    w = check_weights(weights)
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(target, dtype=np.int64)
    if p.ndim == 1:
        p, t = p[None], t.reshape(1)
    picked = np.maximum(p[np.arange(len(t)), t], LOG_CLAMP)
    return float(np.mean(-w[t] * np.log(picked)))


def softmax_cross_entropy(logits, targets, weights=None):
    """Mean weighted cross-entropy of ``softmax(logits)`` and its gradient w.r.t. logits."""
    w = check_weights(weights)
    probs = softmax(logits)
    t = np.asarray(targets, dtype=np.int64)
    n = len(t)
    loss = weighted_cross_entropy(probs, t, w)
    d = probs.copy()
    d[np.arange(n), t] -= 1.0
    d *= (w[t] / n)[:, None]
    return loss, d


def forward(model: Model, x):
    return model.net.forward(model.params, x)


def backward(model: Model, x, targets, weights=None) -> ModelParams:
    """Analytic gradient of the mean weighted cross-entropy w.r.t. every parameter."""
    logits, state = model.net.forward_train(model.params, x)
    _, dlogits = softmax_cross_entropy(logits, targets, weights)
    _, grads = model.net.backward(state, dlogits)
    return ModelParams(grads, dtype=np.float64)


def loss(model: Model, x, targets, weights=None) -> float:
    return softmax_cross_entropy(forward(model, x), targets, weights)[0]
