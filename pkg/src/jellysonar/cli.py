"""Command-line front end.

Every subcommand reads its section of an optional JSON config file, applies
command-line overrides and writes the effective configuration next to its
outputs as ``config.json``.  Failures print one JSON line
``{"error": <type>, "message": <text>}`` on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .benchkit import DEFAULT_LENGTHS, bench_backends, bench_event_latency, write_backend_csv, write_latency_csv
from .core import SplitMode, SplitSpec, split_dataset
from .errors import ConfigError
from .evalkit import write_confusion_csv, write_report_csv, write_report_json
from .eventfuse import (
    FusionTrainConfig,
    build_fusion_model,
    predict_network,
    read_predictions_csv,
    train_fusion,
    write_predictions_csv,
)
from .experiments import METHOD_NAMES, ExperimentConfig, effective_frame_counts, evaluate_runs, run_ladder
from .framecls import FrameTrainConfig, build_frame_model, classify_events, train_frame_classifier, write_confidence_csv
from .ganaug import GanModels, GanTrainConfig, plan_enhancement, synthesize, train_gan
from .gate import sweep_grid, sweep_threshold, write_sweep_csv
from .nnkit import load_model, save_model
from .nnkit.io import read_model_meta
from .sonargen import GenConfig, generate_dataset, load_dataset, read_manifest, save_dataset

log = logging.getLogger("jellysonar")

SECTIONS = {
    "gen": {f.name for f in fields(GenConfig)} | {"scale"},
    "split": {f.name for f in fields(SplitSpec)},
    "frame": {f.name for f in fields(FrameTrainConfig)},
    "gan": {f.name for f in fields(GanTrainConfig)},
    "enhancement": {"strategy", "fraction", "seed"},
    "fusion": {f.name for f in fields(FusionTrainConfig)},
    "gate": {"tau"},
    "eval": {"runs", "seed"},
    "sweep": {"min", "max", "step"},
    "bench": {"lengths", "repetitions", "seed", "backends"},
    "pipeline": {"seeds"},
}


def load_config(path) -> dict:
    """Parse and validate a config file; unknown sections or keys are errors."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: top level must be an object")
    for section, body in cfg.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        unknown = sorted(set(body) - SECTIONS[section])
        if unknown:
            raise ConfigError(f"unknown key(s) in section {section!r}: {', '.join(unknown)}")
    return cfg


def _section(cfg: dict, name: str, **overrides) -> dict:
    out = dict(cfg.get(name, {}))
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    return str(o)


def _split_spec(cfg: dict) -> SplitSpec:
    d = dict(cfg.get("split", {}))
    try:
        return SplitSpec(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"split: {exc}") from None


def _split_dict(spec: SplitSpec) -> dict:
    return {"train_frac": spec.train_frac, "val_frac": spec.val_frac, "test_frac": spec.test_frac,
            "mode": spec.mode.value, "held_out_environment": spec.held_out_environment}


def _require_dir(path, what) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"{what} directory not found: {p}")
    return p


def _real_events(path):
    return [e for e in load_dataset(_require_dir(path, "data")) if not e.synthetic]


def _experiment_config(cfg: dict, seeds=None, tau=None) -> ExperimentConfig:
    enh = cfg.get("enhancement", {})
    d = {
        "split": cfg.get("split", {}),
        "frame": cfg.get("frame", {}),
        "gan": cfg.get("gan", {}),
        "fusion": cfg.get("fusion", {}),
        "strategy": enh.get("strategy", "c"),
        "fraction": enh.get("fraction", 0.1),
        "tau": cfg.get("gate", {}).get("tau", 0.45) if tau is None else tau,
    }
    if seeds is not None:
        d["seeds"] = seeds
    elif "seeds" in cfg.get("pipeline", {}):
        d["seeds"] = cfg["pipeline"]["seeds"]
    try:
        return ExperimentConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args, cfg):
    section = _section(cfg, "gen", seed=args.seed, scale=args.scale)
    gen = GenConfig.from_dict(section)
    events = generate_dataset(gen)
    out = Path(args.out)
    save_dataset(events, out, meta={"generator": gen.to_dict()})
    _write_json(out / "config.json", {"gen": gen.to_dict()})
    print(f"wrote {len(events)} events to {out}")


def cmd_train_frame(args, cfg):
    events = _real_events(args.data)
    spec = _split_spec(cfg)
    fcfg = FrameTrainConfig.from_dict(_section(cfg, "frame", seed=args.seed, epochs=args.epochs))
    train, val, test = split_dataset(events, spec, fcfg.seed)
    extra = []
    if args.synthetic:
        extra = [e for e in load_dataset(_require_dir(args.synthetic, "synthetic data")) if e.synthetic]
    params, history = train_frame_classifier(train + extra, val, fcfg)
    out = Path(args.out)
    meta = {"kind": "frame", "split": _split_dict(spec), "seed": fcfg.seed, "n_synthetic": len(extra)}
    save_model(params, out, extra=meta)
    _write_json(out / "history.json", history)
    _write_json(out / "config.json", {"split": _split_dict(spec), "frame": fcfg.to_dict(),
                                      "data": str(args.data), "synthetic": args.synthetic})
    seqs = classify_events(params, test)
    write_confidence_csv(seqs, [int(e.label) for e in test], out / "test_confidences.csv")
    print(f"frame classifier saved to {out} (best val acc {max(h.get('val_acc', 0) for h in history):.4f})")


def cmd_train_gan(args, cfg):
    events = _real_events(args.data)
    spec = _split_spec(cfg)
    gcfg = GanTrainConfig.from_dict(_section(cfg, "gan", seed=args.seed, epochs=args.epochs))
    train, _, _ = split_dataset(events, spec, gcfg.seed)
    gan, history = train_gan(train, gcfg)
    out = Path(args.out)
    gan.save(out)
    per_event = FrameTrainConfig.from_dict(cfg.get("frame", {})).frames_per_event
    real = effective_frame_counts(train, per_event)
    _write_json(out / "history.json", history)
    _write_json(out / "config.json", {"split": _split_dict(spec), "gan": gcfg.to_dict(),
                                      "real_counts": list(real.counts), "data": str(args.data)})
    print(f"GAN saved to {out}")


def cmd_synth(args, cfg):
    gdir = _require_dir(args.gan, "GAN")
    gan = GanModels.load(gdir)
    section = _section(cfg, "enhancement", strategy=args.strategy, fraction=args.fraction, seed=args.seed)
    if args.counts:
        real = [int(c) for c in args.counts.split(",")]
    else:
        info = gdir / "config.json"
        if not info.is_file():
            raise ConfigError("real class counts unknown: pass --counts or use a GAN directory from train-gan")
        real = json.loads(info.read_text(encoding="utf-8"))["real_counts"]
    for key in ("strategy", "fraction"):
        if key not in section:
            raise ConfigError(f"missing enhancement key {key!r}")
    plan = plan_enhancement(real, section["strategy"], float(section["fraction"]))
    seed = int(section.get("seed", 0))
    events = synthesize(gan, plan, seed, start_id=args.start_id)
    out = Path(args.out)
    eff = {"strategy": plan.strategy.value, "fraction": plan.fraction, "seed": seed,
           "real_counts": list(plan.real.counts), "added": list(plan.added.counts)}
    save_dataset(events, out, meta={"enhancement": eff})
    _write_json(out / "config.json", {"enhancement": eff, "gan": str(args.gan)})
    print(f"wrote {len(events)} synthetic events to {out} (added per class {list(plan.added.counts)})")


def cmd_train_event(args, cfg):
    mdir = _require_dir(args.frame_model, "frame model")
    frame_params = load_model(mdir)
    expected = build_frame_model(0)
    bad = [k for k in expected if k not in frame_params or frame_params[k].shape != expected[k].shape]
    if bad:
        raise ConfigError(f"{mdir} is not a frame classifier (mismatched tensors: {', '.join(bad)})")
    meta = read_model_meta(mdir)
    spec = SplitSpec(**{**meta["split"], "mode": SplitMode(meta["split"]["mode"])}) if "split" in meta else _split_spec(cfg)
    events = _real_events(args.data)
    fcfg = FusionTrainConfig.from_dict(_section(cfg, "fusion", x=args.wx, y=args.wy, seed=args.seed))
    split_seed = meta.get("seed", fcfg.seed)
    train, val, test = split_dataset(events, spec, split_seed)
    seqs = {k: classify_events(frame_params, v) for k, v in (("train", train), ("val", val), ("test", test))}
    labels = {k: [int(e.label) for e in v] for k, v in (("train", train), ("val", val), ("test", test))}
    params, history = train_fusion(seqs["train"], labels["train"], seqs["val"], labels["val"], fcfg)
    out = Path(args.out)
    save_model(params, out, extra={"kind": "fusion", "x": fcfg.x, "y": fcfg.y, "seed": fcfg.seed})
    probs = predict_network(params, seqs["test"])
    write_predictions_csv([e.id for e in test], probs, labels["test"], out / "predictions.csv")
    _write_json(out / "history.json", history)
    _write_json(out / "config.json", {"fusion": fcfg.to_dict(), "split": _split_dict(spec), "split_seed": split_seed,
                                      "frame_model": str(args.frame_model), "data": str(args.data)})
    acc = float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels["test"])))
    print(f"fusion model saved to {out} (test event acc {acc:.4f})")


def cmd_eval(args, cfg):
    section = _section(cfg, "eval", runs=args.runs, seed=args.seed)
    runs = int(section.get("runs", 2))
    if runs < 2:
        raise ConfigError("runs must be >= 2 for std reporting")
    tau = args.threshold if args.threshold is not None else cfg.get("gate", {}).get("tau", 0.45)
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {tau}")
    base = int(section.get("seed", 0))
    seeds = tuple(range(base, base + runs))
    ecfg = _experiment_config(cfg, seeds=seeds, tau=tau)
    events = _real_events(args.data)
    gan = GanModels.load(_require_dir(args.gan, "GAN")) if args.gan else None
    plain, gated = evaluate_runs(events, ecfg, seeds, gan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json([plain, gated], out / "report.json")
    write_report_csv([plain, gated], out / "report.csv")
    write_confusion_csv(gated.mean_matrix, out / "confusion_mean.csv", gated.mean_reported)
    _write_json(out / "config.json", {**ecfg.to_dict(), "data": str(args.data), "gan": args.gan})
    m = gated.mean
    print(f"event acc {m['event_acc']:.4f}  jellyfish reported {m['jelly_acc']:.4f}  FP {m['jelly_fp']:.2f}")


def cmd_sweep(args, cfg):
    section = _section(cfg, "sweep", min=args.min, max=args.max, step=args.step)
    lo, hi, step = float(section.get("min", 0.0)), float(section.get("max", 0.95)), float(section.get("step", 0.05))
    pred = Path(args.predictions)
    if not pred.is_file():
        raise FileNotFoundError(f"predictions file not found: {pred}")
    _, probs, labels = read_predictions_csv(pred)
    points = sweep_threshold(probs, labels, sweep_grid(lo, hi, step))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(points, out)
    _write_json(out.with_suffix(".config.json"), {"sweep": {"min": lo, "max": hi, "step": step},
                                                   "predictions": str(pred)})
    print(f"wrote {len(points)} thresholds to {out}")


def cmd_bench(args, cfg):
    section = _section(cfg, "bench", repetitions=args.repetitions, seed=args.seed)
    lengths = [int(v) for v in args.lengths.split(",")] if args.lengths else section.get("lengths", list(DEFAULT_LENGTHS))
    reps = int(section.get("repetitions", 20))
    seed = int(section.get("seed", 0))
    frame = load_model(_require_dir(args.frame_model, "frame model")) if args.frame_model else build_frame_model(seed)
    fusion = load_model(_require_dir(args.fusion_model, "fusion model")) if args.fusion_model else build_fusion_model(seed)
    rows = bench_event_latency(frame, fusion, lengths, reps, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_latency_csv(rows, out, meta={"bench": {"lengths": lengths, "repetitions": reps, "seed": seed}})
    for r in rows:
        print(f"length {r.length:4d}: avg {r.t_avg_ms:8.2f} ms  fusion {r.t_fusion_ms:8.2f} ms  "
              f"overhead {100 * r.overhead_ratio:5.1f}%")
    if args.backends or section.get("backends"):
        brows = bench_backends(seed=seed)
        bpath = write_backend_csv(brows, out.with_name(out.stem + "_backends.csv"))
        for r in brows:
            print(f"{r.backend:7s} {r.task:10s} batch {r.batch:4d}: {r.t_ms:8.2f} ms")
        print(f"backend comparison written to {bpath}")


def cmd_pipeline(args, cfg):
    gen = GenConfig.from_dict(cfg.get("gen", {}))
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else None
    ecfg = _experiment_config(cfg, seeds=seeds)
    if len(ecfg.seeds) < 2:
        raise ConfigError("pipeline needs at least two seeds for std reporting")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events = generate_dataset(gen)
    save_dataset(events, out / "data", meta={"generator": gen.to_dict()})
    reports, artifacts = run_ladder(events, ecfg)
    lines = ["method,name,frame_acc,event_acc,jelly_acc,jelly_fp,jelly_fp_count"]
    for r in reports:
        m = r.mean
        lines.append(f"{r.method},{METHOD_NAMES[r.method]},{m['frame_acc']:.6g},{m['event_acc']:.6g},"
                     f"{m['jelly_acc']:.6g},{m['jelly_fp_rate']:.6g},{m['jelly_fp']:.6g}")
    (out / "ladder.csv").write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    write_report_json(reports, out / "report.json")
    final = reports[-1]
    write_confusion_csv(final.mean_matrix, out / "confusion_E.csv", final.mean_reported)
    probs = np.concatenate([a["test_probs_d"] for a in artifacts])
    labels = np.concatenate([a["test_labels"] for a in artifacts])
    write_sweep_csv(sweep_threshold(probs, labels, sweep_grid(0.0, 0.95, 0.05)), out / "sweep.csv")
    _write_json(out / "config.json", {"gen": gen.to_dict(), **ecfg.to_dict()})
    for line in lines[1:]:
        print(line)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jellysonar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="JSON config file with per-subcommand sections")
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen", cmd_gen, "generate a synthetic sonar dataset")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--seed", type=int, help="generator seed")
    sp.add_argument("--scale", type=float, help="class counts = reference totals / SCALE")

    sp = add("train-frame", cmd_train_frame, "train the frame classifier")
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--out", required=True, help="output model directory")
    sp.add_argument("--seed", type=int, help="split and training seed")
    sp.add_argument("--epochs", type=int, help="maximum epochs")
    sp.add_argument("--synthetic", help="synthetic dataset directory added to the training split")

    sp = add("train-gan", cmd_train_gan, "train the conditional GAN on the training split")
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--out", required=True, help="output GAN directory")
    sp.add_argument("--seed", type=int, help="split and training seed")
    sp.add_argument("--epochs", type=int, help="training epochs")

    sp = add("synth", cmd_synth, "generate synthetic single-frame events for an enhancement strategy")
    sp.add_argument("--gan", required=True, help="GAN directory from train-gan")
    sp.add_argument("--strategy", choices=["a", "b", "c"], help="a: proportional, b: gap-filling, c: equal")
    sp.add_argument("--fraction", type=float, help="synthetic budget as a fraction of the real sample count")
    sp.add_argument("--counts", help="real per-class counts, comma separated (default: from the GAN directory)")
    sp.add_argument("--seed", type=int, help="sampling seed")
    sp.add_argument("--start-id", type=int, default=1_000_000, help="first synthetic event id")
    sp.add_argument("--out", required=True, help="output dataset directory")

    sp = add("train-event", cmd_train_event, "train the confidence-sequence fusion network")
    sp.add_argument("--frame-model", required=True, help="frame classifier directory")
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--wx", type=float, help="jellyfish loss weight X")
    sp.add_argument("--wy", type=float, help="seaweed loss weight Y")
    sp.add_argument("--seed", type=int, help="training seed")
    sp.add_argument("--out", default="event-model", help="output model directory")

    sp = add("eval", cmd_eval, "run K seeds end to end and report mean and std")
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--runs", type=int, help="number of seeds (>= 2)")
    sp.add_argument("--threshold", type=float, help="jellyfish reporting threshold tau")
    sp.add_argument("--seed", type=int, help="first seed")
    sp.add_argument("--gan", help="GAN directory; enhances the frame training set when given")
    sp.add_argument("--out", default="eval", help="output directory")

    sp = add("sweep", cmd_sweep, "jellyfish TP/FP over a threshold grid")
    sp.add_argument("--predictions", required=True, help="predictions CSV from train-event")
    sp.add_argument("--min", type=float, help="first threshold")
    sp.add_argument("--max", type=float, help="last threshold")
    sp.add_argument("--step", type=float, help="threshold step")
    sp.add_argument("--out", default="sweep.csv", help="output CSV")

    sp = add("bench", cmd_bench, "event latency vs length, averaging vs fusion network")
    sp.add_argument("--lengths", help="comma-separated event lengths")
    sp.add_argument("--repetitions", type=int, help="timed repetitions per length (>= 10)")
    sp.add_argument("--seed", type=int, help="seed for events and untrained models")
    sp.add_argument("--frame-model", help="frame classifier directory (default: untrained)")
    sp.add_argument("--fusion-model", help="fusion model directory (default: untrained)")
    sp.add_argument("--backends", action="store_true", help="also compare the compiled and NumPy kernels")
    sp.add_argument("--out", default="bench.csv", help="output CSV")

    sp = add("pipeline", cmd_pipeline, "generate data and run methods A-E over several seeds")
    sp.add_argument("--seeds", help="comma-separated seeds (default from config, else 0,1)")
    sp.add_argument("--out", default="pipeline", help="output directory")
    return p


def _thread_limit():
    n = os.environ.get("JELLY_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        with _thread_limit():
            args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
