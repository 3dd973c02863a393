"""First-stage frame classifier and per-event confidence sequences."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FRAME_HEIGHT, FRAME_WIDTH, N_CLASSES, ConfidenceSequence, Event, seeded_rng, split_rng
from .nnkit import (
    AdamState,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Model,
    ModelParams,
    ReLU,
    Sequential,
    adam_step,
    softmax,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)


def frame_net(height=FRAME_HEIGHT, width=FRAME_WIDTH) -> Sequential:
    return Sequential(
        [
            Conv2D("conv1", 1, 8, k=3, pad=1),
            ReLU(),
            MaxPool2D(),
            Conv2D("conv2", 8, 16, k=3, pad=1),
            ReLU(),
            MaxPool2D(),
            Flatten(),
            Dense("fc1", 16 * (height // 4) * (width // 4), 64),
            ReLU(),
            Dense("fc2", 64, N_CLASSES),
        ],
        input_shape=(height, width, 1),
    )


def build_frame_model(seed: int) -> ModelParams:
    """He-uniform initial parameters for :func:`frame_net`."""
    return frame_net().init(seed)


def frames_to_input(frames) -> np.ndarray:
    """uint8 ``(n, h, w)`` frames to float ``(n, h, w, 1)`` in [0, 1]."""
    return np.asarray(frames, dtype=np.float64)[..., None] / 255.0


@dataclass
class FrameTrainConfig:
    epochs: int = 30
    patience: int = 4
    batch_size: int = 64
    lr: float = 1e-3
    # frames drawn per event each epoch (None = every frame); keeps long events
    # from dominating and bounds the epoch cost
    frames_per_event: int | None = 16
    val_frames_per_event: int | None = 32
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "FrameTrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_frames(events: Sequence[Event], per_event, rng):
    """Gather ``(pixels, labels)``, at most ``per_event`` frames from each event."""
    xs, ys = [], []
    for ev in events:
        idx = np.arange(ev.n_frames)
        if per_event is not None and ev.n_frames > per_event:
            idx = np.sort(rng.choice(ev.n_frames, size=per_event, replace=False))
        xs.append(ev.frames[idx])
        ys.append(np.full(len(idx), int(ev.label)))
    return np.concatenate(xs), np.concatenate(ys)


def predict_frames(net: Sequential, params: ModelParams, frames, batch_size=512) -> np.ndarray:
    """Softmax outputs ``(n, 6)`` for uint8 frames."""
    frames = np.asarray(frames)
    out = np.empty((len(frames), N_CLASSES))
    for s in range(0, len(frames), batch_size):
        out[s:s + batch_size] = softmax(net.forward(params, frames_to_input(frames[s:s + batch_size])))
    return out


def train_frame_classifier(train: Sequence[Event], val: Sequence[Event], config: FrameTrainConfig | None = None):
    """Train on individual frames, each labelled with its event's label.

    Returns ``(params, log)``: the parameters from the epoch with the best
    validation frame accuracy and one record per epoch.
    """
    cfg = config or FrameTrainConfig()
    if not train:
        raise ValueError("empty training set")
    if len({int(e.label) for e in train}) < 2:
        raise ValueError("training set must cover at least two classes")
    net = frame_net()
    rng = seeded_rng(cfg.seed)
    init_rng, data_rng = split_rng(rng, 2)
    params = net.init(init_rng)
    state = AdamState.zeros_like(params)

    val_real = [e for e in val if not e.synthetic]
    xv, yv = (_sample_frames(val_real, cfg.val_frames_per_event, seeded_rng(cfg.seed + 1))
              if val_real else (None, None))

    best, best_acc, stale, history = params, -1.0, 0, []
    for epoch in range(cfg.epochs):
        xs, ys = _sample_frames(train, cfg.frames_per_event, data_rng)
        order = data_rng.permutation(len(ys))
        losses, correct = [], 0
        for s in range(0, len(order), cfg.batch_size):
            b = order[s:s + cfg.batch_size]
            logits, st = net.forward_train(params, frames_to_input(xs[b]))
            loss, dlogits = softmax_cross_entropy(logits, ys[b])
            _, grads = net.backward(st, dlogits)
            params, state = adam_step(params, grads, state, lr=cfg.lr)
            losses.append(loss * len(b))
            correct += int(np.sum(np.argmax(logits, axis=1) == ys[b]))
        rec = {"epoch": epoch, "loss": float(np.sum(losses) / len(ys)), "train_acc": correct / len(ys)}
        if xv is not None:
            acc = float(np.mean(np.argmax(predict_frames(net, params, xv), axis=1) == yv))
            rec["val_acc"] = acc
            if acc > best_acc:
                best, best_acc, stale = params, acc, 0
            else:
                stale += 1
        else:
            best = params
        history.append(rec)
        log.debug("frame epoch %d: %s", epoch, rec)
        if xv is not None and stale >= cfg.patience:
            break
    return best, history


def classify_frames(params: ModelParams, event: Event) -> ConfidenceSequence:
    net = frame_net(*event.frames.shape[1:])
    return ConfidenceSequence(event.id, predict_frames(net, params, event.frames))


def classify_events(params: ModelParams, events: Sequence[Event], batch_size=512) -> list[ConfidenceSequence]:
    """:func:`classify_frames` for many events, batched across event boundaries."""
    if not events:
        return []
    net = frame_net(*events[0].frames.shape[1:])
    lengths = [e.n_frames for e in events]
    probs = predict_frames(net, params, np.concatenate([e.frames for e in events]), batch_size)
    bounds = np.cumsum([0] + lengths)
    return [ConfidenceSequence(e.id, probs[bounds[i]:bounds[i + 1]]) for i, e in enumerate(events)]


def frame_accuracy(seqs: Sequence[ConfidenceSequence], labels: Sequence[int]) -> float:
    hits = sum(int(np.sum(np.argmax(s.vectors, axis=1) == y)) for s, y in zip(seqs, labels))
    return hits / sum(len(s) for s in seqs)


def frame_confusion(seqs: Sequence[ConfidenceSequence], labels: Sequence[int]) -> np.ndarray:
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for s, y in zip(seqs, labels):
        np.add.at(m[int(y)], np.argmax(s.vectors, axis=1), 1)
    return m


def write_confidence_csv(seqs: Sequence[ConfidenceSequence], labels: Sequence[int], path) -> Path:
    """``event_id,frame_idx,p0..p5,label`` with 9 significant digits, LF endings."""
    path = Path(path)
    lines = ["event_id,frame_idx," + ",".join(f"p{k}" for k in range(N_CLASSES)) + ",label"]
    for seq, y in zip(seqs, labels):
        for i, v in enumerate(seq.vectors):
            lines.append(f"{seq.event_id},{i}," + ",".join(f"{p:.9g}" for p in v) + f",{int(y)}")
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_confidence_csv(path):
    """Inverse of :func:`write_confidence_csv`: ``(sequences, labels)`` in file order."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    grouped: dict[int, list] = {}
    labels: dict[int, int] = {}
    for row in rows:
        parts = row.split(",")
        eid = int(parts[0])
        grouped.setdefault(eid, []).append([float(p) for p in parts[2:2 + N_CLASSES]])
        labels[eid] = int(parts[-1])
    seqs = []
    for eid, vecs in grouped.items():
        v = np.asarray(vecs)
        seqs.append(ConfidenceSequence(eid, v / v.sum(axis=1, keepdims=True)))
    return seqs, [labels[s.event_id] for s in seqs]


def frame_model(params: ModelParams) -> Model:
    return Model(frame_net(), params)
