"""Jellyfish reporting threshold.

Only Jellyfish predictions are gated: an event is *reported* when its fused
argmax is Jellyfish and the winning probability reaches ``tau``.  Gated-out
events keep their Jellyfish label in confusion matrices; the reported counts
are tracked separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ClassLabel, check_confidence

JELLY = int(ClassLabel.JELLYFISH)
DEFAULT_TAU = 0.45


@dataclass(frozen=True)
class GateConfig:
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class GateDecision:
    event_id: int
    predicted: ClassLabel
    confidence: float
    reported: bool


def apply_gate(pred, cfg: GateConfig = GateConfig(), event_id: int = -1) -> GateDecision:
    p = check_confidence(pred)
    k = int(np.argmax(p))
    conf = float(p[k])
    return GateDecision(event_id, ClassLabel(k), conf, k == JELLY and conf >= cfg.tau)


def reported_mask(probs, tau: float) -> np.ndarray:
    """Boolean ``(n,)``: which events the gate reports as jellyfish."""
    p = np.asarray(probs, dtype=np.float64)
    return (np.argmax(p, axis=1) == JELLY) & (p.max(axis=1) >= tau)


def default_taus() -> list[float]:
    return sweep_grid(0.0, 0.95, 0.05)


def sweep_grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    tp_rate: float
    fp_count: int
    fp_rate: float


def sweep_threshold(probs, labels: Sequence[int], taus: Sequence[float]) -> list[SweepPoint]:
    """Jellyfish TP rate and FP count for each ``tau`` (values above 1 act as 1).

    ``tp_rate`` is NaN when no true jellyfish are present; ``fp_rate`` is NaN
    when there are no non-jellyfish events.
    """
    if len(taus) == 0:
        raise ValueError("empty threshold list")
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(p) == 0:
        raise ValueError("no predictions to sweep")
    is_jelly = y == JELLY
    n_jelly, n_other = int(is_jelly.sum()), int((~is_jelly).sum())
    points = []
    for tau in taus:
        t = min(max(float(tau), 0.0), 1.0)
        rep = reported_mask(p, t)
        tp = int(np.sum(rep & is_jelly))
        fp = int(np.sum(rep & ~is_jelly))
        points.append(SweepPoint(
            tau=t,
            tp_rate=tp / n_jelly if n_jelly else float("nan"),
            fp_count=fp,
            fp_rate=fp / n_other if n_other else float("nan"),
        ))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], path) -> Path:
    lines = ["tau,tp_rate,fp_count,fp_rate"]
    for pt in points:
        lines.append(f"{pt.tau:.6g},{pt.tp_rate:.9g},{pt.fp_count},{pt.fp_rate:.9g}")
    path = Path(path)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path
