"""Shared domain types, label taxonomy, RNG contract and dataset splitting.

RNG contract
------------
Every stochastic routine takes a :class:`numpy.random.Generator` built by
:func:`seeded_rng`.  The bit generator is PCG64 seeded through
:class:`numpy.random.SeedSequence`; child streams come from
``SeedSequence.spawn`` (see :func:`split_rng`).  Both algorithms are frozen
by NumPy's stream-compatibility policy, so a seed yields the same draws
across versions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FRAME_WIDTH = 32
FRAME_HEIGHT = 32
MIN_EVENT_LENGTH = 4
MAX_EVENT_LENGTH = 300
N_CLASSES = 6


class ClassLabel(enum.IntEnum):
    BACKGROUND = 0
    JELLYFISH = 1
    ARTEFACTS = 2
    FISH = 3
    SEAWEED = 4
    SEDIMENT = 5

    @property
    def short(self) -> str:
        return _SHORT_NAMES[self]


_SHORT_NAMES = {
    ClassLabel.BACKGROUND: "B",
    ClassLabel.JELLYFISH: "J",
    ClassLabel.ARTEFACTS: "A",
    ClassLabel.FISH: "F",
    ClassLabel.SEAWEED: "Sw",
    ClassLabel.SEDIMENT: "Sd",
}

CLASS_NAMES = tuple(c.name.capitalize() for c in ClassLabel)

# Reference per-class event totals divided by 100 and rounded.
DEFAULT_CLASS_COUNTS = (55, 6, 19, 64, 16, 31)


class SplitMode(str, enum.Enum):
    RANDOM_SPLIT = "random_split"
    LEAVE_ONE_ENVIRONMENT_OUT = "leave_one_environment_out"


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class ClassCounts:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != N_CLASSES:
            raise ValueError(f"expected {N_CLASSES} class counts, got {len(counts)}")
        if any(c < 0 for c in counts):
            raise ValueError(f"class counts must be non-negative: {counts}")
        object.__setattr__(self, "counts", counts)

    def __getitem__(self, label: int) -> int:
        return self.counts[int(label)]

    def __iter__(self):
        return iter(self.counts)

    def __len__(self) -> int:
        return N_CLASSES

    @property
    def total(self) -> int:
        return sum(self.counts)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "ClassCounts":
        return cls(tuple(np.bincount(np.asarray(labels, dtype=int), minlength=N_CLASSES)))


@dataclass(frozen=True, eq=False)
class Event:
    """One tracked object: a stack of uint8 frames with a single label.

    ``frames`` has shape ``(n_frames, height, width)``.  ``synthetic`` marks
    generator-made single-frame events, which only ever feed the frame
    classifier's training set.
    """

    id: int
    label: ClassLabel
    frames: np.ndarray
    environment_id: int = 0
    synthetic: bool = False

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.uint8)
        if frames.ndim != 3:
            raise ValueError(f"frames must be (n, h, w), got shape {frames.shape}")
        lo = 1 if self.synthetic else MIN_EVENT_LENGTH
        if not lo <= frames.shape[0] <= MAX_EVENT_LENGTH:
            raise ValueError(
                f"event {self.id}: frame count {frames.shape[0]} outside [{lo}, {MAX_EVENT_LENGTH}]"
            )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "label", ClassLabel(self.label))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Event):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.environment_id == other.environment_id
            and self.synthetic == other.synthetic
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )

    def __hash__(self):
        return hash((self.id, int(self.label), self.environment_id))


def check_confidence(probs, atol: float = 1e-6) -> np.ndarray:
    """Validate one or more probability vectors over the six classes."""
    p = np.asarray(probs, dtype=np.float64)
    if p.shape[-1] != N_CLASSES:
        raise ValueError(f"confidence vectors need {N_CLASSES} entries, got shape {p.shape}")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("confidence entries must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > atol):
        raise ValueError("confidence vector does not sum to 1")
    return p


@dataclass(frozen=True, eq=False)
class ConfidenceSequence:
    event_id: int
    vectors: np.ndarray  # (n_frames, 6)

    def __post_init__(self):
        v = check_confidence(self.vectors)
        if v.ndim != 2:
            raise ValueError("confidence sequence must be 2-D (n_frames, 6)")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.75
    val_frac: float = 0.125
    test_frac: float = 0.125
    mode: SplitMode = SplitMode.RANDOM_SPLIT
    held_out_environment: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SplitMode(self.mode))
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {fracs}")
        loeo = self.mode is SplitMode.LEAVE_ONE_ENVIRONMENT_OUT
        if loeo != (self.held_out_environment is not None):
            raise ValueError("held_out_environment is required exactly for leave-one-environment-out")


# ---------------------------------------------------------------------------
# RNG


def seeded_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """PCG64 generator for ``seed``.  Same seed, same stream."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Spawn ``n`` independent child generators from ``rng``'s seed sequence.

    Children are built from ``SeedSequence.spawn`` on the parent's seed
    sequence, so calling this twice on the same parent yields new children
    each time (the spawn counter advances) while staying reproducible.
    """
    children = rng.bit_generator.seed_seq.spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def derive_seed(seed: int, *path: int | str) -> int:
    """Stable integer seed for a named sub-task of a seeded run."""
    words = [int(seed)]
    for part in path:
        if isinstance(part, str):
            words.extend(part.encode("utf-8"))
        else:
            words.append(int(part))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# splitting


def _largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Integer apportionment of ``total`` by ``weights``; ties go to the lowest index."""
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() == 0:
        return [0] * len(w)
    exact = total * w / w.sum()
    base = np.floor(exact + 1e-12).astype(int)
    rem = exact - base
    short = total - int(base.sum())
    # stable sort on -rem keeps lower indices first among equal remainders
    order = np.argsort(-np.round(rem, 12), kind="stable")
    for i in order[:short]:
        base[i] += 1
    return [int(b) for b in base]


def _stratified(events: list[Event], fracs: Sequence[float], rng: np.random.Generator):
    """Split preserving per-class proportions, then fix totals to the overall target."""
    n = len(events)
    targets = _largest_remainder(n, fracs)
    by_class: dict[int, list[Event]] = {}
    for ev in events:
        by_class.setdefault(int(ev.label), []).append(ev)

    per_class = {}
    for c in sorted(by_class):
        members = by_class[c]
        perm = rng.permutation(len(members))
        members = [members[i] for i in perm]
        per_class[c] = (members, _largest_remainder(len(members), fracs))

    # Per-class rounding can drift from the global target; move single events
    # between parts (largest class first) until the totals agree.
    sizes = np.array([sum(alloc[k] for _, alloc in per_class.values()) for k in range(len(fracs))])
    classes = sorted(per_class, key=lambda c: (-len(per_class[c][0]), c))
    while np.any(sizes != targets):
        over = int(np.argmax(sizes - targets))
        under = int(np.argmin(sizes - targets))
        for c in classes:
            alloc = per_class[c][1]
            if alloc[over] > 0:
                alloc[over] -= 1
                alloc[under] += 1
                sizes[over] -= 1
                sizes[under] += 1
                break

    parts: list[list[Event]] = [[] for _ in fracs]
    for c in sorted(per_class):
        members, alloc = per_class[c]
        start = 0
        for k, size in enumerate(alloc):
            parts[k].extend(members[start:start + size])
            start += size
    for k, part in enumerate(parts):
        order = rng.permutation(len(part))
        parts[k] = [part[i] for i in order]
    return parts


def split_dataset(events: Sequence[Event], spec: SplitSpec, seed: int):
    """Partition ``events`` into ``(train, val, test)``.

    Random mode is stratified by class.  Leave-one-environment-out puts every
    event of ``spec.held_out_environment`` in test and splits the rest into
    train/val in the ratio ``train_frac : val_frac``.
    """
    events = list(events)
    if not events:
        raise ValueError("cannot split an empty event list")
    if any(ev.synthetic for ev in events):
        raise ValueError("synthetic events must not enter a split; add them to train afterwards")
    events.sort(key=lambda e: e.id)
    rng = seeded_rng(seed)

    if spec.mode is SplitMode.RANDOM_SPLIT:
        train, val, test = _stratified(events, (spec.train_frac, spec.val_frac, spec.test_frac), rng)
        return train, val, test

    envs = {ev.environment_id for ev in events}
    if len(envs) < 2:
        raise ValueError("leave-one-environment-out needs at least two environments")
    if spec.held_out_environment not in envs:
        raise ValueError(f"held-out environment {spec.held_out_environment} not present in data")
    test = [ev for ev in events if ev.environment_id == spec.held_out_environment]
    rest = [ev for ev in events if ev.environment_id != spec.held_out_environment]
    tv = spec.train_frac + spec.val_frac
    if tv <= 0:
        raise ValueError("train_frac + val_frac must be positive")
    train, val = _stratified(rest, (spec.train_frac / tv, spec.val_frac / tv), rng)
    return train, val, test


@dataclass
class Dataset:
    """Convenience wrapper: events plus frame geometry."""

    events: list[Event] = field(default_factory=list)
    width: int = FRAME_WIDTH
    height: int = FRAME_HEIGHT

    def class_counts(self) -> ClassCounts:
        return ClassCounts.from_labels([int(e.label) for e in self.events])
