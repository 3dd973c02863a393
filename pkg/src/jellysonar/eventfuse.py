"""Second-stage event classification from per-frame confidence sequences.

Two fusers are provided: the plain average of the frame predictions and a
small network that slides a 1-D convolution (window 7) over the confidence
sequence, pools mean and max over time and maps the result to six classes.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import N_CLASSES, ConfidenceSequence, seeded_rng, split_rng
from .nnkit import (
    AdamState,
    Conv1D,
    Dense,
    GlobalMeanMaxPool,
    ModelParams,
    Ragged,
    ReLU,
    Sequential,
    adam_step,
    loss_weights,
    softmax,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)

WINDOW = 7
N_FILTERS = 16


def _vectors(seq) -> np.ndarray:
    v = seq.vectors if isinstance(seq, ConfidenceSequence) else np.asarray(seq, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("confidence sequence must be a non-empty (n, 6) array")
    if v.shape[1] != N_CLASSES:
        raise ValueError(f"confidence sequence needs {N_CLASSES} channels, got {v.shape[1]}")
    return v


def argmax_lowest(v) -> int:
    """Argmax with exact ties resolved to the lowest class index."""
    return int(np.argmax(v))


def fuse_by_average(seq) -> np.ndarray:
    """Elementwise mean of the frame vectors."""
    v = _vectors(seq)
    mean = v.mean(axis=0)
    return mean / mean.sum()


def fusion_net() -> Sequential:
    return Sequential(
        [Conv1D("conv", N_CLASSES, N_FILTERS, WINDOW), ReLU(), GlobalMeanMaxPool(), Dense("fc", 2 * N_FILTERS, N_CLASSES)],
        input_shape=(N_CLASSES,),
    )


def build_fusion_model(seed: int) -> ModelParams:
    return fusion_net().init(seed)


def pad_to_window(v: np.ndarray, window: int = WINDOW) -> np.ndarray:
    """Edge-replicate sequences shorter than ``window``: first frame in front, last frame behind."""
    n = v.shape[0]
    if n >= window:
        return v
    before = (window - n) // 2
    return np.pad(v, ((before, window - n - before), (0, 0)), mode="edge")


def to_ragged(seqs) -> Ragged:
    return Ragged.from_list([pad_to_window(_vectors(s)) for s in seqs])


def predict_network(params: ModelParams, seqs, batch_size: int = 256) -> np.ndarray:
    """Softmax outputs ``(n_events, 6)`` of the fusion network."""
    net = fusion_net()
    seqs = list(seqs)
    out = np.empty((len(seqs), N_CLASSES))
    for s in range(0, len(seqs), batch_size):
        out[s:s + batch_size] = softmax(net.forward(params, to_ragged(seqs[s:s + batch_size])))
    return out


def fuse_by_network(params: ModelParams, seq) -> np.ndarray:
    return predict_network(params, [seq])[0]


def predict_average(seqs) -> np.ndarray:
    return np.stack([fuse_by_average(s) for s in seqs]) if len(seqs) else np.zeros((0, N_CLASSES))


@dataclass
class FusionTrainConfig:
    x: float = 2.0  # Jellyfish loss weight
    y: float = 1.0  # Seaweed loss weight
    epochs: int = 60
    batch_size: int = 16
    lr: float = 3e-3
    patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.x > 0 and self.y > 0):
            raise ValueError("loss weights must be positive")

    @property
    def weights(self) -> np.ndarray:
        return loss_weights(self.x, self.y)

    @classmethod
    def from_dict(cls, d: dict) -> "FusionTrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return asdict(self)


def train_fusion(train_seqs: Sequence, train_labels: Sequence[int], val_seqs=(), val_labels=(),
                 config: FusionTrainConfig | None = None):
    """Fit the fusion network with class-weighted cross-entropy.

    ``train_seqs`` must come from one fixed, already-trained frame classifier
    and contain no synthetic single-frame events.  With ``patience`` set, the
    parameters with the lowest weighted validation loss are returned;
    otherwise those after the final epoch.
    """
    cfg = config or FusionTrainConfig()
    if len(train_seqs) == 0:
        raise ValueError("no training sequences")
    for s in list(train_seqs) + list(val_seqs):
        _vectors(s)
    w = cfg.weights
    ys = np.asarray(train_labels, dtype=np.int64)
    yv = np.asarray(val_labels, dtype=np.int64)
    net = fusion_net()
    init_rng, data_rng = split_rng(seeded_rng(cfg.seed), 2)
    params = net.init(init_rng)
    state = AdamState.zeros_like(params)
    padded = [pad_to_window(_vectors(s)) for s in train_seqs]
    val_ragged = to_ragged(val_seqs) if len(val_seqs) else None

    best, best_loss, stale, history = params, np.inf, 0, []
    for epoch in range(cfg.epochs):
        order = data_rng.permutation(len(ys))
        total, correct = 0.0, 0
        for s in range(0, len(order), cfg.batch_size):
            b = order[s:s + cfg.batch_size]
            logits, st = net.forward_train(params, Ragged.from_list([padded[i] for i in b]))
            loss, dlogits = softmax_cross_entropy(logits, ys[b], w)
            _, grads = net.backward(st, dlogits)
            params, state = adam_step(params, grads, state, lr=cfg.lr)
            total += loss * len(b)
            correct += int(np.sum(np.argmax(logits, axis=1) == ys[b]))
        rec = {"epoch": epoch, "loss": total / len(ys), "train_acc": correct / len(ys)}
        if val_ragged is not None:
            logits = net.forward(params, val_ragged)
            vloss, _ = softmax_cross_entropy(logits, yv, w)
            rec["val_loss"] = float(vloss)
            rec["val_acc"] = float(np.mean(np.argmax(logits, axis=1) == yv))
            if cfg.patience is not None:
                if vloss < best_loss:
                    best, best_loss, stale = params, vloss, 0
                else:
                    stale += 1
        history.append(rec)
        log.debug("fusion epoch %d: %s", epoch, rec)
        if cfg.patience is not None and val_ragged is not None and stale >= cfg.patience:
            break
    if cfg.patience is None or val_ragged is None:
        best = params
    return best, history


def write_predictions_csv(event_ids, probs, labels, path) -> Path:
    """``event_id,pred,conf0..conf5,label``; 9 significant digits, LF endings."""
    lines = ["event_id,pred," + ",".join(f"conf{k}" for k in range(N_CLASSES)) + ",label"]
    for eid, p, y in zip(event_ids, probs, labels):
        lines.append(f"{int(eid)},{argmax_lowest(p)}," + ",".join(f"{v:.9g}" for v in p) + f",{int(y)}")
    path = Path(path)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_predictions_csv(path):
    """``(event_ids, probs (n, 6), labels)`` from :func:`write_predictions_csv` output."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or not rows[0].startswith("event_id,pred,"):
        raise ValueError(f"{path}: not a predictions CSV")
    ids, probs, labels = [], [], []
    for row in rows[1:]:
        parts = row.split(",")
        ids.append(int(parts[0]))
        probs.append([float(v) for v in parts[2:2 + N_CLASSES]])
        labels.append(int(parts[2 + N_CLASSES]))
    return ids, np.asarray(probs).reshape(-1, N_CLASSES), labels
