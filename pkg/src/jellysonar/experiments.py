"""Multi-seed experiment drivers.

* ``run_ladder`` - the cumulative method ladder A-E (baseline, + generated
  data, + event classifier, + weighted loss, + confidence threshold).
* ``fusion_study`` - averaging vs fusion network under several loss weights,
  all on the same frozen frame classifier.
* ``generalization_gap`` - random split vs leave-one-environment-out.
* ``enhancement_study`` - enhancement strategies and fractions with the
  sum-of-std variance metric.
* ``evaluate_runs`` - K seeds end to end on a fixed dataset.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import N_CLASSES, ClassCounts, Event, SplitMode, SplitSpec, derive_seed, split_dataset
from .evalkit import ConfusionMatrix, RunMetrics, RunReport, aggregate_runs, mean_std, normalize, std_sum_metric
from .eventfuse import FusionTrainConfig, predict_average, predict_network, train_fusion
from .framecls import FrameTrainConfig, classify_events, frame_accuracy, frame_confusion, train_frame_classifier
from .ganaug import GanModels, GanTrainConfig, plan_enhancement, synthesize, train_gan
from .gate import reported_mask

log = logging.getLogger(__name__)

METHODS = ("A", "B", "C", "D", "E")
METHOD_NAMES = {
    "A": "Baseline",
    "B": "+ Generated data",
    "C": "+ Event classifier",
    "D": "+ Weighted loss",
    "E": "+ Confidence threshold",
}


@dataclass
class ExperimentConfig:
    """Everything one seed of an experiment needs besides the data."""

    split: SplitSpec = field(default_factory=SplitSpec)
    frame: FrameTrainConfig = field(default_factory=FrameTrainConfig)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    strategy: str = "c"
    fraction: float = 0.1
    fusion: FusionTrainConfig = field(default_factory=FusionTrainConfig)
    tau: float = 0.45
    seeds: tuple[int, ...] = (0, 1)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kw = {}
        if "split" in d:
            kw["split"] = SplitSpec(**d["split"])
        if "frame" in d:
            kw["frame"] = FrameTrainConfig.from_dict(d["frame"])
        if "gan" in d:
            kw["gan"] = GanTrainConfig.from_dict(d["gan"])
        if "fusion" in d:
            kw["fusion"] = FusionTrainConfig.from_dict(d["fusion"])
        for k in ("strategy", "fraction", "tau"):
            if k in d:
                kw[k] = d[k]
        if "seeds" in d:
            kw["seeds"] = tuple(int(s) for s in d["seeds"])
        return cls(**kw)

    def to_dict(self) -> dict:
        split = asdict(self.split)
        split["mode"] = self.split.mode.value
        return {
            "split": split,
            "frame": self.frame.to_dict(),
            "gan": self.gan.to_dict(),
            "strategy": self.strategy,
            "fraction": self.fraction,
            "fusion": self.fusion.to_dict(),
            "tau": self.tau,
            "seeds": list(self.seeds),
        }


def effective_frame_counts(events: Sequence[Event], per_event: int | None) -> ClassCounts:
    """Frames per class the frame classifier draws from ``events`` in one epoch."""
    counts = [0] * N_CLASSES
    for e in events:
        counts[int(e.label)] += e.n_frames if per_event is None else min(e.n_frames, per_event)
    return ClassCounts(tuple(counts))


def _labels(events) -> np.ndarray:
    return np.array([int(e.label) for e in events], dtype=np.int64)


def _assert_real(events: Sequence[Event], what: str):
    if any(e.synthetic for e in events):
        raise AssertionError(f"synthetic events found in the {what} split")


@dataclass
class _Stage:
    """A trained frame classifier with its confidence sequences on each split."""

    params: object
    seqs: dict
    labels: dict

    @property
    def test_frame_acc(self) -> float:
        return frame_accuracy(self.seqs["test"], self.labels["test"])


def _frame_stage(train, val, test, cfg: FrameTrainConfig, seed: int, extra: Sequence[Event] = ()) -> _Stage:
    params, _ = train_frame_classifier(list(train) + list(extra), val, replace(cfg, seed=seed))
    splits = {"train": train, "val": val, "test": test}
    return _Stage(
        params,
        {k: classify_events(params, v) for k, v in splits.items()},
        {k: _labels(v) for k, v in splits.items()},
    )


def _fusion_probs(stage: _Stage, cfg: FusionTrainConfig, x: float, y: float, seed: int, targets=("test",)):
    fcfg = replace(cfg, x=x, y=y, seed=seed)
    params, _ = train_fusion(stage.seqs["train"], stage.labels["train"], stage.seqs["val"], stage.labels["val"], fcfg)
    return params, {t: predict_network(params, stage.seqs[t]) for t in targets}


def _cm(labels, probs, tau=None) -> ConfusionMatrix:
    mask = None if tau is None else reported_mask(probs, tau)
    return ConfusionMatrix.from_predictions(labels, np.argmax(probs, axis=1), mask)


def train_enhancer(train: Sequence[Event], cfg: ExperimentConfig, seed: int):
    """Train the GAN on ``train`` and synthesise the configured enhancement."""
    gan, history = train_gan(train, replace(cfg.gan, seed=derive_seed(seed, "gan")))
    real = effective_frame_counts(train, cfg.frame.frames_per_event)
    plan = plan_enhancement(real, cfg.strategy, cfg.fraction)
    synth = synthesize(gan, plan, derive_seed(seed, "synth"), start_id=max(e.id for e in train) + 1)
    return gan, plan, synth, history


def run_ladder_seed(events: Sequence[Event], cfg: ExperimentConfig, seed: int, gan: GanModels | None = None):
    """Methods A-E for one seed.  C, D and E reuse B's frame classifier.

    Returns ``({method: RunMetrics}, artifacts)``.
    """
    train, val, test = split_dataset(events, cfg.split, seed)
    _assert_real(val, "validation")
    _assert_real(test, "test")
    y_test = _labels(test)

    a = _frame_stage(train, val, test, cfg.frame, seed)
    if gan is None:
        gan, plan, synth, gan_log = train_enhancer(train, cfg, seed)
    else:
        plan = plan_enhancement(effective_frame_counts(train, cfg.frame.frames_per_event), cfg.strategy, cfg.fraction)
        synth = synthesize(gan, plan, derive_seed(seed, "synth"), start_id=max(e.id for e in train) + 1)
        gan_log = []
    b = _frame_stage(train, val, test, cfg.frame, seed, extra=synth)

    c_params, c_probs = _fusion_probs(b, cfg.fusion, 1.0, 1.0, seed)
    d_params, d_probs = _fusion_probs(b, cfg.fusion, cfg.fusion.x, cfg.fusion.y, seed)

    metrics = {
        "A": RunMetrics(seed, a.test_frame_acc, _cm(y_test, predict_average(a.seqs["test"]))),
        "B": RunMetrics(seed, b.test_frame_acc, _cm(y_test, predict_average(b.seqs["test"]))),
        "C": RunMetrics(seed, b.test_frame_acc, _cm(y_test, c_probs["test"])),
        "D": RunMetrics(seed, b.test_frame_acc, _cm(y_test, d_probs["test"])),
        "E": RunMetrics(seed, b.test_frame_acc, _cm(y_test, d_probs["test"], cfg.tau), gated=True),
    }
    artifacts = {
        "frame_a": a.params,
        "frame_b": b.params,
        "gan": gan,
        "gan_log": gan_log,
        "plan": plan,
        "fusion_c": c_params,
        "fusion_d": d_params,
        "test_ids": [e.id for e in test],
        "test_probs_d": d_probs["test"],
        "test_labels": y_test,
    }
    return metrics, artifacts


def run_ladder(events: Sequence[Event], cfg: ExperimentConfig) -> tuple[list[RunReport], list[dict]]:
    """Aggregate the ladder over ``cfg.seeds``; one report per method."""
    per_method = {m: [] for m in METHODS}
    artifacts = []
    for seed in cfg.seeds:
        metrics, art = run_ladder_seed(events, cfg, seed)
        for m in METHODS:
            per_method[m].append(metrics[m])
        artifacts.append(art)
        log.info("ladder seed %d done", seed)
    return [aggregate_runs(per_method[m], m) for m in METHODS], artifacts


def fusion_study(events: Sequence[Event], cfg: ExperimentConfig, seeds: Sequence[int],
                 weights: Sequence[tuple[float, float]] = ((1.0, 1.0), (2.0, 1.0)),
                 eval_events: Sequence[Event] | None = None) -> list[dict]:
    """Averaging and fusion networks on one frozen frame classifier per seed.

    Each record holds ``{"seed", "frame_acc", "average", (x, y): ...}`` where
    every value is a dict with the test-split ``ConfusionMatrix`` under
    ``"test"`` and, when ``eval_events`` are given, one on those under
    ``"eval"``.
    """
    records = []
    y_eval = _labels(eval_events) if eval_events is not None else None
    for seed in seeds:
        train, val, test = split_dataset(events, cfg.split, seed)
        _assert_real(test, "test")
        stage = _frame_stage(train, val, test, cfg.frame, seed)
        targets = ("test",)
        if eval_events is not None:
            stage.seqs["eval"] = classify_events(stage.params, eval_events)
            stage.labels["eval"] = y_eval
            targets = ("test", "eval")
        rec = {"seed": seed, "frame_acc": stage.test_frame_acc,
               "average": {t: _cm(stage.labels[t], predict_average(stage.seqs[t])) for t in targets}}
        for x, y in weights:
            _, probs = _fusion_probs(stage, cfg.fusion, x, y, seed, targets)
            rec[(x, y)] = {t: _cm(stage.labels[t], probs[t]) for t in targets}
        records.append(rec)
        log.info("fusion study seed %d done", seed)
    return records


def generalization_gap(events: Sequence[Event], cfg: ExperimentConfig, seeds: Sequence[int],
                       held_out: int = 1) -> dict[str, list[dict]]:
    """Frame and averaged-event test accuracy, random split vs held-out environment."""
    loeo = SplitSpec(cfg.split.train_frac, cfg.split.val_frac, cfg.split.test_frac,
                     SplitMode.LEAVE_ONE_ENVIRONMENT_OUT, held_out)
    rand = SplitSpec(cfg.split.train_frac, cfg.split.val_frac, cfg.split.test_frac)
    out = {"random": [], "loeo": []}
    for seed in seeds:
        for name, spec in (("random", rand), ("loeo", loeo)):
            train, val, test = split_dataset(events, spec, seed)
            stage = _frame_stage(train, val, test, cfg.frame, seed)
            cm = _cm(stage.labels["test"], predict_average(stage.seqs["test"]))
            out[name].append({"seed": seed, "frame_acc": stage.test_frame_acc, "event_acc": float(np.trace(cm.m) / cm.m.sum())})
    return out


def enhancement_study(events: Sequence[Event], cfg: ExperimentConfig, seeds: Sequence[int],
                      strategies: Sequence[str] = ("a", "b", "c"),
                      fractions: Sequence[float] = (0.1, 0.2, 0.5)) -> list[dict]:
    """Frame and event accuracy plus normalised sum-of-std for every setup.

    The first row is real data only and is the normalisation baseline.  One
    GAN is trained per seed and shared by all setups.
    """
    setups = [("real", 0.0)] + [(s, f) for s in strategies for f in fractions]
    frames = {k: [] for k in setups}
    evs = {k: [] for k in setups}
    for seed in seeds:
        train, val, test = split_dataset(events, cfg.split, seed)
        gan, _ = train_gan(train, replace(cfg.gan, seed=derive_seed(seed, "gan")))
        real = effective_frame_counts(train, cfg.frame.frames_per_event)
        for key in setups:
            extra = ()
            if key[0] != "real":
                plan = plan_enhancement(real, key[0], key[1])
                extra = synthesize(gan, plan, derive_seed(seed, "synth"), start_id=max(e.id for e in train) + 1)
            st = _frame_stage(train, val, test, cfg.frame, seed, extra)
            frames[key].append(frame_confusion(st.seqs["test"], st.labels["test"]))
            evs[key].append(_cm(st.labels["test"], predict_average(st.seqs["test"])).m)
    base_f = std_sum_metric(frames[setups[0]])
    base_e = std_sum_metric(evs[setups[0]])
    rows = []
    for key in setups:
        fa = [np.trace(m) / m.sum() for m in frames[key]]
        ea = [np.trace(m) / m.sum() for m in evs[key]]
        rows.append({
            "strategy": key[0],
            "fraction": key[1],
            "frame_acc": mean_std(fa),
            "event_acc": mean_std(ea),
            "frame_std": normalize([std_sum_metric(frames[key])], base_f)[0] if base_f else float("nan"),
            "event_std": normalize([std_sum_metric(evs[key])], base_e)[0] if base_e else float("nan"),
        })
    return rows


def evaluate_runs(events: Sequence[Event], cfg: ExperimentConfig, seeds: Sequence[int],
                  gan: GanModels | None = None) -> tuple[RunReport, RunReport]:
    """Frame classifier, weighted fusion and gate for every seed.

    With ``gan`` the frame classifier's training set is enhanced per ``cfg``.
    Returns ``(ungated, gated)`` reports.
    """
    if len(seeds) < 2:
        raise ValueError("runs must be >= 2 for std reporting")
    plain, gated = [], []
    for seed in seeds:
        train, val, test = split_dataset(events, cfg.split, seed)
        _assert_real(test, "test")
        extra = ()
        if gan is not None:
            plan = plan_enhancement(effective_frame_counts(train, cfg.frame.frames_per_event), cfg.strategy, cfg.fraction)
            extra = synthesize(gan, plan, derive_seed(seed, "synth"), start_id=max(e.id for e in train) + 1)
        stage = _frame_stage(train, val, test, cfg.frame, seed, extra)
        _, probs = _fusion_probs(stage, cfg.fusion, cfg.fusion.x, cfg.fusion.y, seed)
        y = stage.labels["test"]
        plain.append(RunMetrics(seed, stage.test_frame_acc, _cm(y, probs["test"])))
        gated.append(RunMetrics(seed, stage.test_frame_acc, _cm(y, probs["test"], cfg.tau), gated=True))
    return aggregate_runs(plain, "fusion"), aggregate_runs(gated, "fusion+gate")
