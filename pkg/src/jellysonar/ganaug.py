"""Conditional GAN frame generator and training-set enhancement strategies.

The generator and discriminator are small MLPs conditioned on a one-hot class
vector.  The discriminator ascends ``log D(x) + log(1 - D(G(z)))`` and the
generator descends the non-saturating ``-log D(G(z))``, plus a term pulling
each class's mean output toward that class's mean real frame.  The generator
adds learned per-class pixel noise to its output.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    FRAME_HEIGHT,
    FRAME_WIDTH,
    N_CLASSES,
    ClassCounts,
    ClassLabel,
    Event,
    _largest_remainder,
    seeded_rng,
    split_rng,
)
from .nnkit import (
    AdamState,
    Dense,
    LeakyReLU,
    ModelParams,
    ReLU,
    Sequential,
    Tanh,
    adam_step,
    load_model,
    save_model,
    sigmoid,
)
from .nnkit.io import read_model_meta

log = logging.getLogger(__name__)

Z_DIM = 32
N_PIXELS = FRAME_HEIGHT * FRAME_WIDTH
LOG_CLAMP = 1e-12
OUTPUT_INIT_SCALE = 0.1
COND_SCALE = 8.0
# per-class log std of i.i.d. pixel noise added to the generator output
NOISE_KEY = "noise.log_std"


def gan_losses(d_real, d_fake) -> tuple[float, float]:
    """``(L_D, L_G)`` for discriminator outputs on a real and a generated sample.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]``.  Array inputs are
    averaged.
    """
    r = np.clip(np.asarray(d_real, dtype=np.float64), LOG_CLAMP, 1.0 - LOG_CLAMP)
    f = np.clip(np.asarray(d_fake, dtype=np.float64), LOG_CLAMP, 1.0 - LOG_CLAMP)
    l_d = float(np.mean(np.log(r)) + np.mean(np.log1p(-f)))
    l_g = float(np.mean(-np.log(f)))
    return l_d, l_g


def generator_net(z_dim: int = Z_DIM) -> Sequential:
    return Sequential(
        [Dense("g1", z_dim + N_CLASSES, 256), ReLU(), Dense("g2", 256, N_PIXELS, init="glorot"), Tanh()],
        input_shape=(z_dim + N_CLASSES,),
    )


def discriminator_net() -> Sequential:
    """Outputs a logit; ``D(x) = sigmoid(logit)``."""
    return Sequential(
        [
            Dense("d1", N_PIXELS + N_CLASSES, 256),
            LeakyReLU(0.2),
            Dense("d2", 256, 64),
            LeakyReLU(0.2),
            Dense("d3", 64, 1, init="glorot"),
        ],
        input_shape=(N_PIXELS + N_CLASSES,),
    )


@dataclass
class GanModels:
    generator: ModelParams
    discriminator: ModelParams
    classes: tuple[int, ...] = tuple(range(N_CLASSES))
    z_dim: int = Z_DIM

    def generate(self, labels, rng: np.random.Generator) -> np.ndarray:
        """Frames in [-1, 1], shape ``(n, h, w)``, one per requested label."""
        labels = np.asarray(labels, dtype=np.int64)
        z = rng.standard_normal((len(labels), self.z_dim))
        out = generator_net(self.z_dim).forward(self.generator, np.concatenate([z, _onehot(labels)], axis=1))
        if NOISE_KEY in self.generator:
            out = out + _noise_scale(self.generator, labels)[:, None] * rng.standard_normal(out.shape)
            out = np.clip(out, -1.0, 1.0)
        return out.reshape(len(labels), FRAME_HEIGHT, FRAME_WIDTH)

    def discriminate(self, frames, labels) -> np.ndarray:
        """``D(x)`` for frames already scaled to [-1, 1]."""
        x = np.asarray(frames, dtype=np.float64).reshape(len(labels), -1)
        logit = discriminator_net().forward(self.discriminator, np.concatenate([x, _onehot(labels)], axis=1))
        return sigmoid(logit[:, 0])

    def save(self, path) -> Path:
        path = Path(path)
        meta = {"classes": list(self.classes), "z_dim": self.z_dim}
        save_model(self.generator, path / "generator", extra=meta)
        save_model(self.discriminator, path / "discriminator", extra=meta)
        return path

    @classmethod
    def load(cls, path) -> "GanModels":
        path = Path(path)
        meta = read_model_meta(path / "generator")
        return cls(
            load_model(path / "generator"),
            load_model(path / "discriminator"),
            tuple(meta.get("classes", range(N_CLASSES))),
            int(meta.get("z_dim", Z_DIM)),
        )


def _noise_scale(params, labels) -> np.ndarray:
    return np.exp(np.asarray(params[NOISE_KEY], dtype=np.float64))[np.asarray(labels, dtype=np.int64)]


def _onehot(labels) -> np.ndarray:
    """Scaled one-hot conditioning vector.

    Next to 1024 pixel inputs a unit one-hot barely moves the first layer, and
    both networks then learn the class-agnostic marginal.
    """
    return COND_SCALE * np.eye(N_CLASSES)[np.asarray(labels, dtype=np.int64)]


def to_unit(frames) -> np.ndarray:
    """uint8 pixels to [-1, 1]."""
    return np.asarray(frames, dtype=np.float64) / 127.5 - 1.0


def to_uint8(x) -> np.ndarray:
    """[-1, 1] to uint8, rounding half to even and clipping."""
    return np.clip(np.rint((np.asarray(x, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


@dataclass
class GanTrainConfig:
    epochs: int = 12
    batch_size: int = 64
    lr: float = 2e-3
    beta1: float = 0.5
    frames_per_class: int = 400
    ema_decay: float = 0.995
    lr_final: float = 0.1  # fraction of ``lr`` reached at the last step
    # Gaussian noise added to every discriminator input, real or generated, so
    # D cannot win on pixel-level texture the generator cannot produce
    instance_noise: float = 0.0
    # learn a per-class pixel-noise std added to the generator output; an MLP
    # fed a 32-d z cannot produce i.i.d. sensor noise on its own
    pixel_noise: bool = True
    pixel_noise_init: float = 0.1
    # weight of a per-class mean-matching term in the generator loss: the
    # squared distance between each class's batch mean and its real mean
    mean_matching: float = 1.0
    probe_size: int = 256
    classes: tuple[int, ...] | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "GanTrainConfig":
        kw = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if kw.get("classes") is not None:
            kw["classes"] = tuple(int(c) for c in kw["classes"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


def _frame_pool(events: Sequence[Event], per_class: int, rng):
    """Up to ``per_class`` frames of each class, drawn uniformly from all its frames.

    Balancing keeps rare classes from being starved of conditioning examples.
    """
    xs, ys = [], []
    for c in sorted({int(e.label) for e in events}):
        frames = np.concatenate([e.frames for e in events if int(e.label) == c])
        if len(frames) > per_class:
            frames = frames[np.sort(rng.choice(len(frames), size=per_class, replace=False))]
        xs.append(frames)
        ys.append(np.full(len(frames), c))
    return np.concatenate(xs), np.concatenate(ys)


def train_gan(events: Sequence[Event], config: GanTrainConfig | None = None):
    """Alternate one discriminator step and one generator step per batch.

    Returns ``(GanModels, history)``.  Each history record holds the epoch's
    mean ``L_D`` and ``L_G`` and the discriminator's real-vs-fake accuracy on a
    held-out probe.
    """
    cfg = config or GanTrainConfig()
    if not events:
        raise ValueError("no training events")
    present = sorted({int(e.label) for e in events})
    classes = tuple(cfg.classes) if cfg.classes is not None else tuple(present)
    missing = [ClassLabel(c).name for c in classes if c not in present]
    if missing:
        raise ValueError(f"classes requested for conditioning but absent from training data: {missing}")
    events = [e for e in events if int(e.label) in classes]

    init_g, init_d, data_rng, probe_rng = split_rng(seeded_rng(cfg.seed), 4)
    g_net, d_net = generator_net(), discriminator_net()
    g_params, d_params = g_net.init(init_g), d_net.init(init_d)
    g_state, d_state = AdamState.zeros_like(g_params), AdamState.zeros_like(d_params)

    pool_x, pool_y = _frame_pool(events, cfg.frames_per_class, data_rng)
    pool_x = to_unit(pool_x.reshape(len(pool_x), -1))
    # start the generator near the mean training image: small output weights,
    # bias at the mean image (random output weights stamp a fixed pattern on it)
    mean_img = np.clip(pool_x.mean(axis=0), -0.999, 0.999)
    class_means = np.zeros((N_CLASSES, N_PIXELS))
    for c in classes:
        class_means[c] = pool_x[pool_y == c].mean(axis=0)
    g_params = g_params.replace({"g2.w": g_params["g2.w"] * OUTPUT_INIT_SCALE, "g2.b": np.arctanh(mean_img)})
    if cfg.pixel_noise:
        g_params = ModelParams({**g_params, NOISE_KEY: np.full(N_CLASSES, np.log(cfg.pixel_noise_init))})
    g_ema = {k: g_params[k].astype(np.float64) for k in g_params}
    # hold out a probe of real frames, never trained on
    order = data_rng.permutation(len(pool_y))
    n_probe = min(cfg.probe_size, len(order) // 5)
    probe_idx, train_idx = order[:n_probe], order[n_probe:]
    n_batches = -(-len(train_idx) // cfg.batch_size)
    total_steps = max(1, cfg.epochs * n_batches)

    history = []
    for epoch in range(cfg.epochs):
        perm = train_idx[data_rng.permutation(len(train_idx))]
        l_ds, l_gs = [], []
        for s in range(0, len(perm), cfg.batch_size):
            b = perm[s:s + cfg.batch_size]
            n = len(b)
            step = epoch * n_batches + s // cfg.batch_size
            # linear decay to ``lr_final`` damps the late-training oscillation
            frac = step / total_steps
            adam = {"lr": cfg.lr * (1.0 - frac) + cfg.lr * cfg.lr_final * frac, "beta1": cfg.beta1}
            cond = _onehot(pool_y[b])
            sig = cfg.instance_noise
            real = np.concatenate([pool_x[b] + sig * data_rng.standard_normal((n, N_PIXELS)), cond], axis=1)

            # discriminator: minimise -(log D(x) + log(1 - D(G(z))))
            z = data_rng.standard_normal((n, Z_DIM))
            fake = g_net.forward(g_params, np.concatenate([z, cond], axis=1))
            if cfg.pixel_noise:
                fake = fake + _noise_scale(g_params, pool_y[b])[:, None] * data_rng.standard_normal(fake.shape)
            fake = fake + sig * data_rng.standard_normal(fake.shape)
            x = np.concatenate([real, np.concatenate([fake, cond], axis=1)])
            logit, st = d_net.forward_train(d_params, x)
            p = sigmoid(logit[:, 0])
            target = np.concatenate([np.ones(n), np.zeros(n)])
            _, d_grads = d_net.backward(st, ((p - target) / n)[:, None])
            d_params, d_state = adam_step(d_params, d_grads, d_state, **adam)
            l_d, _ = gan_losses(p[:n], p[n:])

            # generator: minimise -log D(G(z)) through the updated discriminator
            z = data_rng.standard_normal((n, Z_DIM))
            g_out, g_st = g_net.forward_train(g_params, np.concatenate([z, cond], axis=1))
            seen = g_out
            if cfg.pixel_noise:
                scale = _noise_scale(g_params, pool_y[b])
                eps = data_rng.standard_normal(g_out.shape)
                seen = seen + scale[:, None] * eps
            seen = seen + sig * data_rng.standard_normal(g_out.shape)
            logit, st = d_net.forward_train(d_params, np.concatenate([seen, cond], axis=1))
            pf = sigmoid(logit[:, 0])
            dx, _ = d_net.backward(st, (-(1.0 - pf) / n)[:, None])
            dg = dx[:, :N_PIXELS]
            if cfg.mean_matching:
                dg = dg + cfg.mean_matching * _mean_matching_grad(g_out, pool_y[b], class_means)
            _, g_grads = g_net.backward(g_st, dg)
            if cfg.pixel_noise:
                per_row = scale * np.sum(dx[:, :N_PIXELS] * eps, axis=1)
                g_grads[NOISE_KEY] = np.bincount(pool_y[b], weights=per_row, minlength=N_CLASSES)
            g_params, g_state = adam_step(g_params, g_grads, g_state, **adam)
            for k in g_ema:
                g_ema[k] = cfg.ema_decay * g_ema[k] + (1.0 - cfg.ema_decay) * g_params[k]
            _, l_g = gan_losses(0.5, pf)
            l_ds.append(l_d)
            l_gs.append(l_g)

        models = GanModels(ModelParams(g_ema), d_params, classes)
        rec = {"epoch": epoch, "loss_d": float(np.mean(l_ds)), "loss_g": float(np.mean(l_gs))}
        if n_probe:
            rec["d_probe_acc"] = _probe_accuracy(models, pool_x[probe_idx], pool_y[probe_idx], probe_rng)
        history.append(rec)
        log.debug("gan epoch %d: %s", epoch, rec)
    return GanModels(ModelParams(g_ema), d_params, classes), history


def _mean_matching_grad(out, labels, class_means) -> np.ndarray:
    """Gradient of ``sum_c (n_c / n) * ||mean(out | c) - mu_c||^2`` with respect to ``out``."""
    n = len(labels)
    sums = np.zeros_like(class_means)
    np.add.at(sums, labels, out)
    counts = np.bincount(labels, minlength=len(class_means))
    gap = sums / np.maximum(counts, 1)[:, None] - class_means
    return 2.0 * gap[labels] / n


def _probe_accuracy(models: GanModels, real_x, real_y, rng) -> float:
    fake = models.generate(real_y, rng).reshape(len(real_y), -1)
    d_real = models.discriminate(real_x, real_y)
    d_fake = models.discriminate(fake, real_y)
    return float((np.sum(d_real > 0.5) + np.sum(d_fake < 0.5)) / (2 * len(real_y)))


# ---------------------------------------------------------------------------
# enhancement strategies


class Strategy(str, enum.Enum):
    A_PROPORTIONAL_REAL = "a"
    B_PROPORTIONAL_MISSING = "b"
    C_EQUAL = "c"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, Strategy):
            return value
        v = str(value).strip().lower()
        for s in cls:
            if v in (s.value, s.name.lower()):
                return s
        raise ValueError(f"unknown enhancement strategy {value!r}; expected a, b or c")


@dataclass(frozen=True)
class EnhancementPlan:
    strategy: Strategy
    fraction: float
    real: ClassCounts
    added: ClassCounts = field(default_factory=lambda: ClassCounts((0,) * N_CLASSES))

    @property
    def budget(self) -> int:
        return self.added.total


def round_half_up(x) -> int:
    """Round to the nearest integer, halves away from zero, on the decimal value of ``x``."""
    return int(Decimal(str(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def enhancement_budget(total: int, fraction: float) -> int:
    return round_half_up(Decimal(str(fraction)) * total)


def plan_enhancement(real, strategy, fraction: float) -> EnhancementPlan:
    """Per-class synthetic-sample quotas for one strategy.

    The budget is ``round_half_up(fraction * N)``; quotas are apportioned by
    largest remainder with ties going to the lowest class index.
    """
    strategy = Strategy.parse(strategy)
    counts = real if isinstance(real, ClassCounts) else ClassCounts(tuple(int(c) for c in real))
    if not fraction > 0:
        raise ValueError(f"fraction must be positive, got {fraction}")
    n = np.asarray(counts.counts, dtype=np.float64)
    if n.sum() <= 0:
        raise ValueError("real class counts are empty")
    budget = enhancement_budget(counts.total, fraction)
    if strategy is Strategy.A_PROPORTIONAL_REAL:
        weights = n
    elif strategy is Strategy.B_PROPORTIONAL_MISSING:
        weights = n.max() - n
        if weights.sum() == 0:
            weights = np.ones(N_CLASSES)
    else:
        weights = np.ones(N_CLASSES)
    added = _largest_remainder(budget, weights)
    return EnhancementPlan(strategy, float(fraction), counts, ClassCounts(tuple(added)))


def synthesize(gan: GanModels, plan: EnhancementPlan, seed: int, start_id: int = 0) -> list[Event]:
    """Single-frame synthetic events in class order, ``plan.added[c]`` of class ``c``.

    Each class draws from its own RNG stream.
    """
    unsupported = [ClassLabel(c).name for c in range(N_CLASSES) if plan.added[c] and c not in gan.classes]
    if unsupported:
        raise ValueError(f"generator was not trained on classes {unsupported}")
    streams = split_rng(seeded_rng(seed), N_CLASSES)
    events, next_id = [], start_id
    for c in range(N_CLASSES):
        k = plan.added[c]
        if not k:
            continue
        pixels = to_uint8(gan.generate(np.full(k, c), streams[c]))
        for frame in pixels:
            events.append(Event(next_id, ClassLabel(c), frame[None], environment_id=-1, synthetic=True))
            next_id += 1
    return events
