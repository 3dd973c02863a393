"""Layers with hand-written backward passes.

Every layer follows the same protocol::

    y, cache = layer.forward(params, x)
    dx, grads = layer.backward(params, cache, dy)

``params`` maps parameter names to float64 arrays; layers only read the
entries they declare in :meth:`Layer.param_shapes`.  Image tensors are NHWC.
Variable-length sequences travel as :class:`Ragged` batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend


@dataclass(frozen=True)
class Ragged:
    """A batch of variable-length sequences packed row-wise.

    ``values`` is ``(sum(lengths), channels)``; sequence ``i`` occupies rows
    ``offsets[i]:offsets[i] + lengths[i]``.
    """

    values: np.ndarray
    lengths: np.ndarray

    @classmethod
    def from_list(cls, seqs) -> "Ragged":
        seqs = [np.asarray(s, dtype=np.float64) for s in seqs]
        lengths = np.array([s.shape[0] for s in seqs], dtype=np.int64)
        return cls(np.concatenate(seqs, axis=0), lengths)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.lengths)[:-1]]).astype(np.int64)

    def with_values(self, values) -> "Ragged":
        return Ragged(values, self.lengths)

    def __len__(self):
        return len(self.lengths)


def _values(x):
    return x.values if isinstance(x, Ragged) else x


def _rewrap(like, values):
    return like.with_values(values) if isinstance(like, Ragged) else values


class Layer:
    name = ""

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, dy):
        raise NotImplementedError


def he_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense(Layer):
    def __init__(self, name, n_in, n_out, init="he"):
        self.name, self.n_in, self.n_out, self.init_kind = name, n_in, n_out, init

    def param_shapes(self):
        return {f"{self.name}.w": (self.n_in, self.n_out), f"{self.name}.b": (self.n_out,)}

    def init(self, rng):
        if self.init_kind == "zeros":
            w = np.zeros((self.n_in, self.n_out))
        elif self.init_kind == "glorot":
            bound = math.sqrt(6.0 / (self.n_in + self.n_out))
            w = rng.uniform(-bound, bound, size=(self.n_in, self.n_out))
        else:
            w = he_uniform(rng, (self.n_in, self.n_out), self.n_in)
        return {f"{self.name}.w": w, f"{self.name}.b": np.zeros(self.n_out)}

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.n_in,):
            raise ValueError(f"{self.name}: expected input ({self.n_in},), got {tuple(in_shape)}")
        return (self.n_out,)

    def forward(self, params, x):
        return x @ params[f"{self.name}.w"] + params[f"{self.name}.b"], x

    def backward(self, params, x, dy):
        grads = {f"{self.name}.w": x.T @ dy, f"{self.name}.b": dy.sum(axis=0)}
        return dy @ params[f"{self.name}.w"].T, grads


class Conv2D(Layer):
    """Stride-1 2-D convolution, weights stored (kh, kw, c_in, c_out)."""

    def __init__(self, name, c_in, c_out, k=3, pad=1):
        self.name, self.c_in, self.c_out, self.k, self.pad = name, c_in, c_out, k, pad

    def param_shapes(self):
        k = self.k
        return {f"{self.name}.w": (k, k, self.c_in, self.c_out), f"{self.name}.b": (self.c_out,)}

    def init(self, rng):
        k = self.k
        fan_in = k * k * self.c_in
        return {
            f"{self.name}.w": he_uniform(rng, (k, k, self.c_in, self.c_out), fan_in),
            f"{self.name}.b": np.zeros(self.c_out),
        }

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.c_in:
            raise ValueError(f"{self.name}: expected {self.c_in} channels, got {c}")
        return (h + 2 * self.pad - self.k + 1, w + 2 * self.pad - self.k + 1, self.c_out)

    def forward(self, params, x):
        n, h, w, _ = x.shape
        cols = backend.kernels.im2col(np.ascontiguousarray(x), self.k, self.k, self.pad, self.pad)
        ho, wo = cols.shape[1], cols.shape[2]
        flat = cols.reshape(n * ho * wo, -1)
        wmat = params[f"{self.name}.w"].reshape(-1, self.c_out)
        y = (flat @ wmat + params[f"{self.name}.b"]).reshape(n, ho, wo, self.c_out)
        return y, (cols, h, w)

    def backward(self, params, cache, dy):
        cols, h, w = cache
        n, ho, wo = cols.shape[:3]
        flat = cols.reshape(n * ho * wo, -1)
        dflat = dy.reshape(-1, self.c_out)
        wmat = params[f"{self.name}.w"].reshape(-1, self.c_out)
        grads = {
            f"{self.name}.w": (flat.T @ dflat).reshape(params[f"{self.name}.w"].shape),
            f"{self.name}.b": dflat.sum(axis=0),
        }
        dcols = np.ascontiguousarray((dflat @ wmat.T).reshape(cols.shape))
        dx = backend.kernels.col2im(dcols, h, w, self.pad, self.pad)
        return dx, grads


class Conv1D(Layer):
    """Valid (unpadded) stride-1 convolution over time for :class:`Ragged` input.

    Windows never straddle two sequences.  Weights stored (k, c_in, c_out).
    """

    def __init__(self, name, c_in, c_out, k):
        self.name, self.c_in, self.c_out, self.k = name, c_in, c_out, k

    def param_shapes(self):
        return {f"{self.name}.w": (self.k, self.c_in, self.c_out), f"{self.name}.b": (self.c_out,)}

    def init(self, rng):
        return {
            f"{self.name}.w": he_uniform(rng, (self.k, self.c_in, self.c_out), self.k * self.c_in),
            f"{self.name}.b": np.zeros(self.c_out),
        }

    def output_shape(self, in_shape):
        (c,) = in_shape
        if c != self.c_in:
            raise ValueError(f"{self.name}: expected {self.c_in} channels, got {c}")
        return (self.c_out,)

    def _starts(self, x: Ragged):
        if np.any(x.lengths < self.k):
            raise ValueError(f"{self.name}: sequences must be at least {self.k} long")
        out_len = x.lengths - self.k + 1
        seq_of_row = np.repeat(np.arange(len(x.lengths)), out_len)
        out_offsets = np.concatenate([[0], np.cumsum(out_len)[:-1]])
        within = np.arange(out_len.sum()) - out_offsets[seq_of_row]
        return x.offsets[seq_of_row] + within, out_len

    def forward(self, params, x: Ragged):
        starts, out_len = self._starts(x)
        idx = starts[:, None] + np.arange(self.k)[None, :]
        cols = x.values[idx]  # (rows, k, c_in)
        wmat = params[f"{self.name}.w"].reshape(-1, self.c_out)
        y = cols.reshape(len(starts), -1) @ wmat + params[f"{self.name}.b"]
        return Ragged(y, out_len), (cols, idx, x.values.shape[0])

    def backward(self, params, cache, dy: Ragged):
        cols, idx, n_rows = cache
        d = dy.values
        wmat = params[f"{self.name}.w"].reshape(-1, self.c_out)
        grads = {
            f"{self.name}.w": (cols.reshape(len(d), -1).T @ d).reshape(params[f"{self.name}.w"].shape),
            f"{self.name}.b": d.sum(axis=0),
        }
        dcols = (d @ wmat.T).reshape(cols.shape)
        dx = np.zeros((n_rows, self.c_in))
        for j in range(self.k):
            np.add.at(dx, idx[:, j], dcols[:, j, :])
        row_len = dy.lengths + self.k - 1
        return Ragged(dx, row_len), grads


class MaxPool2D(Layer):
    """2x2, stride 2; gradient goes to the first maximum of each window."""

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool needs even spatial dims, got {h}x{w}")
        return (h // 2, w // 2, c)

    def forward(self, params, x):
        out, arg = backend.kernels.maxpool2_forward(np.ascontiguousarray(x))
        return out, arg

    def backward(self, params, arg, dy):
        return backend.kernels.maxpool2_backward(np.ascontiguousarray(dy), arg), {}


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, shape, dy):
        return dy.reshape(shape), {}


class ReLU(Layer):
    def forward(self, params, x):
        v = _values(x)
        mask = v > 0
        return _rewrap(x, v * mask), mask

    def backward(self, params, mask, dy):
        return _rewrap(dy, _values(dy) * mask), {}


class LeakyReLU(Layer):
    def __init__(self, alpha=0.2):
        self.alpha = alpha

    def forward(self, params, x):
        v = _values(x)
        slope = np.where(v > 0, 1.0, self.alpha)
        return _rewrap(x, v * slope), slope

    def backward(self, params, slope, dy):
        return _rewrap(dy, _values(dy) * slope), {}


class Tanh(Layer):
    def forward(self, params, x):
        y = np.tanh(_values(x))
        return _rewrap(x, y), y

    def backward(self, params, y, dy):
        return _rewrap(dy, _values(dy) * (1.0 - y * y)), {}


class Sigmoid(Layer):
    def forward(self, params, x):
        y = sigmoid(_values(x))
        return _rewrap(x, y), y

    def backward(self, params, y, dy):
        return _rewrap(dy, _values(dy) * y * (1.0 - y)), {}


class GlobalMeanMaxPool(Layer):
    """Ragged ``(T_i, C)`` sequences to dense ``(N, 2C)``: [mean over time, max over time]."""

    def forward(self, params, x: Ragged):
        offsets = x.offsets
        lengths = x.lengths
        v = x.values
        mean = np.add.reduceat(v, offsets, axis=0) / lengths[:, None]
        mx = np.maximum.reduceat(v, offsets, axis=0)
        # first row attaining the maximum, per sequence and channel
        seq_of_row = np.repeat(np.arange(len(lengths)), lengths)
        hit = v == mx[seq_of_row]
        rows = np.arange(v.shape[0])[:, None]
        cand = np.where(hit, rows, v.shape[0])
        argmax = np.minimum.reduceat(cand, offsets, axis=0)
        return np.concatenate([mean, mx], axis=1), (lengths, seq_of_row, argmax, v.shape)

    def output_shape(self, in_shape):
        (c,) = in_shape
        return (2 * c,)

    def backward(self, params, cache, dy):
        lengths, seq_of_row, argmax, shape = cache
        c = shape[1]
        dmean, dmax = dy[:, :c], dy[:, c:]
        dx = (dmean / lengths[:, None])[seq_of_row]
        cols = np.broadcast_to(np.arange(c), argmax.shape)
        np.add.at(dx, (argmax, cols), dmax)
        return Ragged(dx, lengths), {}


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
