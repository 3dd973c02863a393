"""Latency benchmarks.

``bench_event_latency`` times whole-event classification against event length,
once with averaging fusion and once with the fusion network.
``bench_backends`` compares the compiled and pure-NumPy convolution kernels.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import resource
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MAX_EVENT_LENGTH, MIN_EVENT_LENGTH, ClassLabel, seeded_rng, split_rng
from .eventfuse import fuse_by_average, fuse_by_network
from .framecls import frame_net, frames_to_input, predict_frames
from .nnkit import ModelParams, adam_step, available_backends, softmax_cross_entropy, use_backend
from .nnkit.optim import AdamState
from .sonargen import TRIAL, generate_event

DEFAULT_LENGTHS = (4, 50, 100, 150, 200, 300)
MIN_REPETITIONS = 10


@dataclass(frozen=True)
class LatencyRow:
    length: int
    t_avg_ms: float
    t_fusion_ms: float
    overhead_ratio: float


def trimmed_mean(samples: Sequence[float]) -> float:
    """Mean after dropping one minimum and one maximum (plain mean below 3 samples)."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    return float(s[1:-1].mean() if len(s) >= 3 else s.mean())


def bench_event_latency(frame_params: ModelParams, fusion_params: ModelParams,
                        lengths: Sequence[int] = DEFAULT_LENGTHS, repetitions: int = 20,
                        seed: int = 0) -> list[LatencyRow]:
    """Per-length trimmed-mean latency of frame classification plus each fuser.

    One synthetic jellyfish event of each exact length is rendered up front
    and a warm-up pass over every length is discarded.  Each repetition visits
    the lengths round-robin so slow spells of the machine hit all of them.
    Both paths share the frame stage, so a repetition times it once and then
    times each fuser on the same confidence sequence; the two totals differ
    only by the fusers' own cost instead of by scheduler noise in the dominant
    frame stage.
    """
    lengths = [int(n) for n in lengths]
    if not lengths:
        raise ValueError("no lengths given")
    bad = [n for n in lengths if not MIN_EVENT_LENGTH <= n <= MAX_EVENT_LENGTH]
    if bad:
        raise ValueError(f"lengths {bad} outside [{MIN_EVENT_LENGTH}, {MAX_EVENT_LENGTH}]")
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"repetitions must be >= {MIN_REPETITIONS}, got {repetitions}")
    net = frame_net()
    rngs = split_rng(seeded_rng(seed), len(lengths))
    events = [generate_event(ClassLabel.JELLYFISH, TRIAL, rng, n_frames=n) for n, rng in zip(lengths, rngs)]
    t_avg = [[] for _ in lengths]
    t_fus = [[] for _ in lengths]
    for rep in range(repetitions + 1):
        for i, event in enumerate(events):
            t0 = time.perf_counter()
            seq = predict_frames(net, frame_params, event.frames)
            t1 = time.perf_counter()
            fuse_by_average(seq)
            t2 = time.perf_counter()
            fuse_by_network(fusion_params, seq)
            t3 = time.perf_counter()
            if rep:
                t_avg[i].append((t1 - t0) + (t2 - t1))
                t_fus[i].append((t1 - t0) + (t3 - t2))
    rows = []
    for n, a_s, f_s in zip(lengths, t_avg, t_fus):
        a, f = trimmed_mean(a_s) * 1e3, trimmed_mean(f_s) * 1e3
        rows.append(LatencyRow(n, a, f, f / a - 1.0))
    return rows


def machine_info() -> dict:
    from .nnkit import backend

    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "cpu_count": os.cpu_count(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "kernel_backend": backend.BACKEND,
        "peak_rss_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
    }


def write_latency_csv(rows: Sequence[LatencyRow], path, meta: dict | None = None) -> Path:
    """``length,t_avg_ms,t_fusion_ms,overhead_ratio`` plus a ``.json`` metadata sidecar."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["length", "t_avg_ms", "t_fusion_ms", "overhead_ratio"])
    for r in rows:
        w.writerow([r.length, f"{r.t_avg_ms:.6g}", f"{r.t_fusion_ms:.6g}", f"{r.overhead_ratio:.6g}"])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    sidecar = {"machine": machine_info(), "max_overhead_ratio": max(r.overhead_ratio for r in rows)}
    if meta:
        sidecar.update(meta)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_latency_csv(path) -> list[LatencyRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            LatencyRow(int(r["length"]), float(r["t_avg_ms"]), float(r["t_fusion_ms"]), float(r["overhead_ratio"]))
            for r in csv.DictReader(fh)
        ]


# ---------------------------------------------------------------------------
# kernel backends


@dataclass(frozen=True)
class BackendRow:
    backend: str
    task: str
    batch: int
    t_ms: float


def bench_backends(batch_sizes: Sequence[int] = (64, 256), repetitions: int = 10, seed: int = 0,
                   backends: Sequence[str] | None = None) -> list[BackendRow]:
    """Frame-classifier inference and one training step under each kernel backend."""
    net = frame_net()
    params = net.init(seed)
    rng = seeded_rng(seed + 1)
    rows = []
    for name in backends or available_backends():
        with use_backend(name):
            for bs in batch_sizes:
                x = frames_to_input(rng.integers(0, 256, size=(bs, 32, 32)))
                y = rng.integers(0, 6, size=bs)

                def infer():
                    net.forward(params, x)

                def train():
                    logits, st = net.forward_train(params, x)
                    _, d = softmax_cross_entropy(logits, y)
                    _, g = net.backward(st, d)
                    adam_step(params, g, AdamState.zeros_like(params))

                for task, fn in (("inference", infer), ("train_step", train)):
                    fn()
                    ts = []
                    for _ in range(repetitions):
                        t0 = time.perf_counter()
                        fn()
                        ts.append(time.perf_counter() - t0)
                    rows.append(BackendRow(name, task, bs, trimmed_mean(ts) * 1e3))
    return rows


def write_backend_csv(rows: Sequence[BackendRow], path) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["backend", "task", "batch", "t_ms"])
    for r in rows:
        w.writerow([r.backend, r.task, r.batch, f"{r.t_ms:.6g}"])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def rows_to_dicts(rows) -> list[dict]:
    return [asdict(r) for r in rows]
