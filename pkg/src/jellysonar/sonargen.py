"""Deterministic synthetic sonar events and the dataset directory format.

Each event is a crop around one tracked object, rendered frame by frame.
The tracker keeps the object near the crop centre, so position carries
little class information; shape and its change over time carry the rest.

* Background - sensor noise plus a few specks that reappear at random
  positions every frame; nothing coherent.
* Jellyfish - soft, roughly upright ellipse with a brighter rim whose area
  pulses with a period of 8-20 frames.  On contraction the bell narrows and
  looks seaweed-like.
* Artefacts - horizontal streaks that come and go between frames.
* Fish - small bright blob swimming fast and roughly level; it slides across
  the crop in a straight line until the tracker re-centres it.
* Seaweed - long thin upright ellipse, constant area, slight sway.
* Sediment - faint diffuse cloud that grows or disperses over the event.

On top of the class model every frame gets the environment's background
level, Gaussian noise, an occasional surface-reflection streak
(``artefact_rate``) and the environment's current (``drift``).  Objects fade
in and out at the ends of an event and sometimes fade out mid-event while
still being tracked, so some frames carry the event label without showing
the object.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_CLASS_COUNTS,
    FRAME_HEIGHT,
    FRAME_WIDTH,
    MAX_EVENT_LENGTH,
    MIN_EVENT_LENGTH,
    N_CLASSES,
    ClassCounts,
    ClassLabel,
    Event,
    seeded_rng,
)
from .errors import (
    FormatError,
    MissingFileError,
    OffsetError,
    SizeMismatchError,
    TruncatedDataError,
    VersionMismatchError,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class EnvironmentProfile:
    id: int
    noise_sigma: float
    artefact_rate: float
    background_level: float
    drift: tuple[float, float] = (0.0, 0.0)
    name: str = ""

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.artefact_rate <= 1.0:
            raise ValueError("artefact_rate must lie in [0, 1]")
        object.__setattr__(self, "drift", tuple(float(d) for d in self.drift))


TRIAL = EnvironmentProfile(0, noise_sigma=10.0, artefact_rate=0.03, background_level=40.0,
                           drift=(0.15, 0.05), name="trial")
DEPLOYMENT = EnvironmentProfile(1, noise_sigma=22.0, artefact_rate=0.12, background_level=56.0,
                                drift=(0.6, -0.3), name="deployment")
DEFAULT_ENVIRONMENTS = (TRIAL, DEPLOYMENT)


@dataclass(frozen=True)
class LengthDistribution:
    """Event lengths: a lognormal clipped to ``[min, max]`` and rounded.

    ``mu`` is solved so the clipped mean equals ``target_mean``.
    """

    min: int = MIN_EVENT_LENGTH
    max: int = MAX_EVENT_LENGTH
    target_mean: float = 76.0
    sigma: float = 0.75

    def __post_init__(self):
        if self.min < MIN_EVENT_LENGTH or self.max > MAX_EVENT_LENGTH or self.min >= self.max:
            raise ValueError(f"length bounds must satisfy {MIN_EVENT_LENGTH} <= min < max <= {MAX_EVENT_LENGTH}")
        if not self.min < self.target_mean < self.max:
            raise ValueError("target_mean must lie strictly between min and max")

    @property
    def mu(self) -> float:
        return _solve_lognormal_mu(self.min, self.max, self.target_mean, self.sigma)

    def sample(self, rng: np.random.Generator) -> int:
        x = rng.lognormal(self.mu, self.sigma)
        return int(min(max(round(x), self.min), self.max))


def _clipped_lognormal_mean(mu, sigma, lo, hi):
    cdf = lambda z: 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    la, lb = math.log(lo), math.log(hi)
    below = cdf((la - mu) / sigma)
    above = 1.0 - cdf((lb - mu) / sigma)
    inside = math.exp(mu + sigma**2 / 2) * (cdf((lb - mu - sigma**2) / sigma) - cdf((la - mu - sigma**2) / sigma))
    return lo * below + hi * above + inside


def _solve_lognormal_mu(lo, hi, target, sigma):
    a, b = math.log(lo) - 5 * sigma, math.log(hi) + 5 * sigma
    for _ in range(200):
        mid = 0.5 * (a + b)
        if _clipped_lognormal_mean(mid, sigma, lo, hi) < target:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class GenConfig:
    class_counts: ClassCounts = field(default_factory=lambda: ClassCounts(DEFAULT_CLASS_COUNTS))
    environments: tuple[EnvironmentProfile, ...] = DEFAULT_ENVIRONMENTS
    length_distribution: LengthDistribution = field(default_factory=LengthDistribution)
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.class_counts, ClassCounts):
            object.__setattr__(self, "class_counts", ClassCounts(tuple(self.class_counts)))
        envs = tuple(self.environments)
        if not envs:
            raise ValueError("at least one environment is required")
        if len({e.id for e in envs}) != len(envs):
            raise ValueError("environment ids must be unique")
        object.__setattr__(self, "environments", envs)

    def to_dict(self) -> dict:
        return {
            "class_counts": list(self.class_counts.counts),
            "environments": [asdict(e) for e in self.environments],
            "length_distribution": asdict(self.length_distribution),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        kwargs = {}
        if "class_counts" in d:
            kwargs["class_counts"] = ClassCounts(tuple(d["class_counts"]))
        if "scale" in d:
            # reference per-class totals divided by ``scale``
            totals = np.array([5500, 581, 1855, 6390, 1556, 3136]) / float(d["scale"])
            kwargs["class_counts"] = ClassCounts(tuple(int(round(t)) for t in totals))
        if "environments" in d:
            kwargs["environments"] = tuple(
                EnvironmentProfile(**{**e, "drift": tuple(e.get("drift", (0.0, 0.0)))}) for e in d["environments"]
            )
        if "length_distribution" in d:
            kwargs["length_distribution"] = LengthDistribution(**d["length_distribution"])
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# rendering

_YY, _XX = np.mgrid[0:FRAME_HEIGHT, 0:FRAME_WIDTH].astype(np.float64)


def _ellipse(cx, cy, a, b, theta, sharpness=2.5):
    """Soft ellipse masks for per-frame centres/axes; arrays of shape (T,)."""
    cx, cy, a, b, theta = (np.asarray(v, dtype=np.float64)[:, None, None] for v in (cx, cy, a, b, theta))
    dx, dy = _XX - cx, _YY - cy
    c, s = np.cos(theta), np.sin(theta)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    r = np.sqrt(u * u + v * v)
    # transition ~1px wide at the boundary
    edge = np.minimum(a, b) * sharpness
    return 1.0 / (1.0 + np.exp(np.clip((r - 1.0) * edge, -50, 50))), r


def _visibility(n, rng, fade_prob):
    """Per-frame object visibility in [0, 1]: edge ramps plus an optional mid-event fade."""
    vis = np.ones(n)
    ramp = min(3, n // 4)
    if ramp:
        steps = (np.arange(ramp) + 1) / (ramp + 1)
        if rng.random() < 0.7:
            vis[:ramp] = steps
        if rng.random() < 0.7:
            vis[n - ramp:] = steps[::-1]
    if n >= 10 and rng.random() < fade_prob:
        span = max(2, int(round(n * rng.uniform(0.15, 0.35))))
        start = int(rng.integers(0, n - span + 1))
        vis[start:start + span] = np.minimum(vis[start:start + span], rng.uniform(0.05, 0.25))
    return vis


def _tracked(n, drift, jitter, rng, lag=3.0):
    """Object centre inside the tracker crop.

    The tracker keeps the object near the crop centre; it lags behind the
    current by ``lag * drift`` and wobbles as an AR(1) process.
    """
    centre = 16.0 + lag * np.asarray(drift, dtype=np.float64) + rng.normal(0.0, 1.0, size=2)
    kicks = rng.normal(0.0, jitter, size=(n, 2))
    wobble = np.empty((n, 2))
    cur = rng.normal(0.0, 2.0 * jitter, size=2)
    for t in range(n):
        cur = 0.85 * cur + kicks[t]
        wobble[t] = cur
    return np.clip(centre + wobble, 6.0, 26.0)


def _streaks(n, rng, present, intensity_range=(70.0, 110.0)):
    """Horizontal streak layer for frames where ``present`` is true."""
    out = np.zeros((n, FRAME_HEIGHT, FRAME_WIDTH))
    row0 = rng.uniform(6, 26)
    for t in np.flatnonzero(present):
        row = row0 + rng.normal(0, 0.8)
        thick = rng.uniform(1.0, 2.0)
        x0 = rng.uniform(-4, 10)
        x1 = x0 + rng.uniform(16, 34)
        amp = rng.uniform(*intensity_range)
        prof_y = np.exp(-0.5 * ((_YY[:, 0] - row) / thick) ** 2)
        prof_x = 1.0 / (1.0 + np.exp(-(_XX[0] - x0))) * 1.0 / (1.0 + np.exp(_XX[0] - x1))
        out[t] += amp * prof_y[:, None] * prof_x[None, :]
    return out


def _render_background(n, env, rng):
    layer = np.zeros((n, FRAME_HEIGHT, FRAME_WIDTH))
    for t in range(n):
        for _ in range(int(rng.integers(0, 4))):
            cx, cy = rng.uniform(2, 30, size=2)
            amp = rng.uniform(25, 60)
            layer[t] += amp * np.exp(-((_XX - cx) ** 2 + (_YY - cy) ** 2) / (2 * rng.uniform(0.8, 1.6) ** 2))
    return layer


def _render_jellyfish(n, env, rng):
    r0 = rng.uniform(5.5, 7.0)
    period = rng.uniform(8.0, 20.0)
    phase = rng.uniform(0, 2 * np.pi)
    s = np.sin(2 * np.pi * np.arange(n) / period + phase)
    a = r0 * (1.0 + 0.15 * s)
    b = r0 * (1.0 + 0.55 * s)
    # bells pulse upwards, so the long axis stays near vertical
    theta = np.pi / 2 + rng.normal(0.0, 0.3) + 0.1 * np.sin(np.arange(n) / 7.0)
    pos = _tracked(n, env.drift, 0.5, rng)
    mask, r = _ellipse(pos[:, 0], pos[:, 1], a, b, theta)
    amp = rng.uniform(40, 80)
    rim = 0.55 + 0.45 * np.clip(r, 0, 1)
    return amp * mask * rim, _visibility(n, rng, 0.3)


def _render_artefacts(n, env, rng):
    present = rng.random(n) < rng.uniform(0.45, 0.8)
    present[int(rng.integers(0, n))] = True
    layer = _streaks(n, rng, present)
    if rng.random() < 0.35:
        layer += _streaks(n, rng, rng.random(n) < 0.4)
    return layer, np.ones(n)


def _render_fish(n, env, rng):
    b = rng.uniform(2.2, 3.2)
    a = 1.4 * b
    speed = rng.uniform(0.8, 1.6)
    # fish mostly swim level, either way across the beam
    heading = rng.normal(0.0, 0.3) + np.pi * int(rng.integers(0, 2))
    vel = speed * np.array([np.cos(heading), np.sin(heading)]) + np.asarray(env.drift)
    # the tracker lags a fast swimmer: it slides across the crop in a straight
    # line until the crop is re-centred, and faces its direction of travel
    slide = (rng.uniform(0, 10) + 0.6 * speed * np.arange(n)) % 10.0 - 5.0
    pos = _tracked(n, env.drift, 0.4 * speed, rng) + slide[:, None] * np.array([np.cos(heading), np.sin(heading)])
    theta = np.arctan2(vel[1], vel[0]) + np.cumsum(rng.normal(0, 0.05, size=n))
    mask, _ = _ellipse(pos[:, 0], pos[:, 1], np.full(n, a), np.full(n, b), theta)
    amp = rng.uniform(100, 150)
    return amp * mask, _visibility(n, rng, 0.25)


def _render_seaweed(n, env, rng):
    a = rng.uniform(7.0, 10.0)
    b = rng.uniform(2.0, 3.0)
    # anchored stalks stand roughly upright and sway
    theta = np.pi / 2 + rng.normal(0.0, 0.25) + 0.08 * np.sin(np.arange(n) / rng.uniform(6, 12))
    pos = _tracked(n, env.drift, 0.2, rng)
    mask, _ = _ellipse(pos[:, 0], pos[:, 1], np.full(n, a), np.full(n, b), theta, sharpness=4.0)
    amp = rng.uniform(40, 75)
    return amp * mask, _visibility(n, rng, 0.3)


def _render_sediment(n, env, rng):
    s0, s1 = rng.uniform(2.5, 4.0), rng.uniform(6.0, 9.0)
    if rng.random() < 0.5:
        s0, s1 = s1, s0
    sig = np.linspace(s0, s1, n)
    pos = _tracked(n, env.drift, 0.4, rng)
    d2 = (_XX - pos[:, 0, None, None]) ** 2 + (_YY - pos[:, 1, None, None]) ** 2
    cloud = np.exp(-d2 / (2 * sig[:, None, None] ** 2))
    amp = rng.uniform(25, 55) * (min(s0, s1) / sig) ** 0.5
    texture = 1.0 + 0.6 * rng.standard_normal((n, FRAME_HEIGHT, FRAME_WIDTH))
    return amp[:, None, None] * cloud * np.clip(texture, 0, None), _visibility(n, rng, 0.2)


_RENDERERS = {
    ClassLabel.JELLYFISH: _render_jellyfish,
    ClassLabel.ARTEFACTS: _render_artefacts,
    ClassLabel.FISH: _render_fish,
    ClassLabel.SEAWEED: _render_seaweed,
    ClassLabel.SEDIMENT: _render_sediment,
}


def render_layers(label, env: EnvironmentProfile, n_frames: int, rng: np.random.Generator):
    """Noise-free object layer ``(n, 32, 32)`` and per-frame visibility for one event."""
    label = ClassLabel(label)
    n = int(n_frames)
    if label is ClassLabel.BACKGROUND:
        return _render_background(n, env, rng), np.ones(n)
    return _RENDERERS[label](n, env, rng)


def render_frames(label, env: EnvironmentProfile, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    """uint8 frames ``(n, 32, 32)`` for one event of class ``label``."""
    layer, vis = render_layers(label, env, n_frames, rng)
    obj = layer * vis[:, None, None]
    n = obj.shape[0]
    surface = rng.random(n) < env.artefact_rate
    if surface.any():
        obj = obj + _streaks(n, rng, surface, (50.0, 90.0))
    img = env.background_level + obj + rng.normal(0.0, env.noise_sigma, size=obj.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_event(label, env: EnvironmentProfile, rng: np.random.Generator, n_frames: int | None = None,
                   event_id: int = 0, lengths: LengthDistribution | None = None) -> Event:
    """Render one event.  The length is drawn from ``lengths`` unless given."""
    if n_frames is None:
        n_frames = (lengths or LengthDistribution()).sample(rng)
    frames = render_frames(label, env, n_frames, rng)
    return Event(id=event_id, label=ClassLabel(label), frames=frames, environment_id=env.id)


def allocate_counts(counts: Sequence[int], n_env: int) -> np.ndarray:
    """``(n_env, 6)`` events per environment: even split, remainder to the lowest ids."""
    counts = np.asarray(counts, dtype=int)
    alloc = np.repeat((counts // n_env)[None, :], n_env, axis=0)
    rem = counts % n_env
    for e in range(n_env):
        alloc[e] += (rem > e).astype(int)
    return alloc


def generate_dataset(cfg: GenConfig) -> list[Event]:
    """All events for ``cfg``, ids assigned in (environment, class, index) order."""
    if cfg.class_counts.total == 0:
        raise ValueError("class counts are all zero")
    envs = sorted(cfg.environments, key=lambda e: e.id)
    alloc = allocate_counts(cfg.class_counts.counts, len(envs))
    plan = [(env, c) for ei, env in enumerate(envs) for c in range(N_CLASSES) for _ in range(alloc[ei, c])]
    root = np.random.SeedSequence(int(cfg.seed))
    children = root.spawn(len(plan))
    events = []
    for i, ((env, c), ss) in enumerate(zip(plan, children)):
        events.append(generate_event(c, env, seeded_rng(ss), event_id=i, lengths=cfg.length_distribution))
    return events


def _background_removed(events):
    x = np.concatenate([e.frames.reshape(e.n_frames, -1) for e in events]).astype(np.float64) / 255.0
    return x - np.median(x, axis=1, keepdims=True)


def centroid_baseline(train: Sequence[Event], test: Sequence[Event]) -> float:
    """Frame accuracy of a nearest class-mean-image classifier.

    Each frame has its median subtracted first so the environments'
    background levels do not decide the class.  This is a sanity check that
    the simulator carries class signal, not a competitive model.
    """
    xs = _background_removed(train)
    ys = np.concatenate([np.full(e.n_frames, int(e.label)) for e in train])
    present = np.unique(ys)
    cents = np.stack([xs[ys == c].mean(axis=0) for c in present])
    xt = _background_removed(test)
    yt = np.concatenate([np.full(e.n_frames, int(e.label)) for e in test])
    d = -2 * xt @ cents.T + (cents**2).sum(1)[None, :]
    pred = present[np.argmin(d, axis=1)]
    return float(np.mean(pred == yt))


# ---------------------------------------------------------------------------
# dataset directory format

MANIFEST = "manifest.json"
FRAMES = "frames.bin"


def save_dataset(events: Sequence[Event], path, width=FRAME_WIDTH, height=FRAME_HEIGHT, meta=None) -> Path:
    """Write ``manifest.json`` + ``frames.bin`` (uint8, row-major, manifest order)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    records, offset = [], 0
    with open(path / FRAMES, "wb") as fh:
        for ev in events:
            if ev.frames.shape[1:] != (height, width):
                raise ValueError(f"event {ev.id}: frame shape {ev.frames.shape[1:]} != ({height}, {width})")
            rec = {
                "id": int(ev.id),
                "label": int(ev.label),
                "environment_id": int(ev.environment_id),
                "n_frames": int(ev.n_frames),
                "byte_offset": offset,
            }
            if ev.synthetic:
                rec["synthetic"] = True
            records.append(rec)
            data = ev.frames.tobytes()
            fh.write(data)
            offset += len(data)
    manifest = {"format_version": FORMAT_VERSION, "width": width, "height": height, "events": records}
    if meta:
        manifest["meta"] = meta
    (path / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    mpath = Path(path) / MANIFEST
    if not mpath.is_file():
        raise MissingFileError(f"missing {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: invalid JSON ({exc})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{mpath}: format_version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    return manifest


def load_dataset(path) -> list[Event]:
    path = Path(path)
    manifest = read_manifest(path)
    fpath = path / FRAMES
    if not fpath.is_file():
        raise MissingFileError(f"missing {fpath}")
    blob = fpath.read_bytes()
    w, h = int(manifest["width"]), int(manifest["height"])
    frame_bytes = w * h
    events, expected = [], 0
    for rec in manifest["events"]:
        n = int(rec["n_frames"])
        if rec["byte_offset"] != expected:
            raise OffsetError(f"event {rec['id']}: byte_offset {rec['byte_offset']} but expected {expected}")
        end = expected + n * frame_bytes
        if end > len(blob):
            raise TruncatedDataError(f"event {rec['id']}: needs bytes up to {end}, {FRAMES} has {len(blob)}")
        frames = np.frombuffer(blob, dtype=np.uint8, count=n * frame_bytes, offset=expected).reshape(n, h, w)
        events.append(Event(id=int(rec["id"]), label=ClassLabel(int(rec["label"])), frames=frames,
                            environment_id=int(rec["environment_id"]), synthetic=bool(rec.get("synthetic", False))))
        expected = end
    if expected != len(blob):
        raise SizeMismatchError(f"{FRAMES} has {len(blob)} bytes but manifest accounts for {expected}")
    return events
