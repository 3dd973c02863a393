"""Minimal neural-network kit: layers, hand-written backprop, Adam, model files."""

from .backend import BACKEND, available_backends, use_backend
from .gradcheck import check_model_gradients, numeric_gradient, relative_error
from .io import load_model, save_model
from .layers import (
    Conv1D,
    Conv2D,
    Dense,
    Flatten,
    GlobalMeanMaxPool,
    LeakyReLU,
    MaxPool2D,
    Ragged,
    ReLU,
    Sigmoid,
    Tanh,
    sigmoid,
)
from .model import (
    Model,
    ModelParams,
    Sequential,
    backward,
    forward,
    loss,
    loss_weights,
    softmax,
    softmax_cross_entropy,
    weighted_cross_entropy,
)
from .optim import AdamState, adam_step

__all__ = [
    "BACKEND",
    "AdamState",
    "Conv1D",
    "Conv2D",
    "Dense",
    "Flatten",
    "GlobalMeanMaxPool",
    "LeakyReLU",
    "MaxPool2D",
    "Model",
    "ModelParams",
    "Ragged",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "Tanh",
    "adam_step",
    "available_backends",
    "backward",
    "check_model_gradients",
    "forward",
    "load_model",
    "loss",
    "loss_weights",
    "numeric_gradient",
    "relative_error",
    "save_model",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "use_backend",
    "weighted_cross_entropy",
]
