"""The ten acceptance criteria, one or more tests each.

A pass/fail line per criterion is printed in the terminal summary.
Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

from jellysonar.core import SplitSpec, seeded_rng, split_dataset
from jellysonar.errors import (
    DuplicateNameError,
    MissingFileError,
    OffsetError,
    SizeMismatchError,
    TruncatedDataError,
    UnknownDtypeError,
    VersionMismatchError,
)
from jellysonar.evalkit import accuracy, jelly_fp_count, jelly_tp_rate, normalize, std_sum_metric
from jellysonar.eventfuse import build_fusion_model
from jellysonar.experiments import ExperimentConfig, fusion_study, generalization_gap
from jellysonar.framecls import build_frame_model
from jellysonar.ganaug import GanTrainConfig, gan_losses, plan_enhancement, to_unit, train_gan
from jellysonar.gate import default_taus, sweep_threshold
from jellysonar.benchkit import bench_event_latency, read_latency_csv, write_latency_csv
from jellysonar.nnkit import load_model, save_model
from jellysonar.sonargen import GenConfig, generate_dataset, load_dataset, save_dataset

from test_evalkit import STD_SUM_CASES, _diag_runs
from test_gate import _brute, _ungated
from test_ganaug import _budget_oracle, _check_plan
from test_nnkit import GRAD_TOL, LAYER_CASES, N_INSTANCES, gradient_errors

SEEDS = range(5)
JELLY = 1


@pytest.fixture(scope="module")
def default_events():
    return generate_dataset(GenConfig())


# ---------------------------------------------------------------------------
# 1 gradient correctness


@pytest.mark.criterion(1)
def test_c01_gradients_match_finite_differences():
    start = time.perf_counter()
    worst = {}
    for name, case in LAYER_CASES.items():
        worst[name] = max(max(gradient_errors(case, seed).values()) for seed in range(N_INSTANCES))
    elapsed = time.perf_counter() - start
    print(f"worst relative error per layer: {worst}; {elapsed:.1f}s")
    assert max(worst.values()) < GRAD_TOL
    assert elapsed < 30


# ---------------------------------------------------------------------------
# 2 sum-of-std oracle


@pytest.mark.criterion(2)
def test_c02_std_sum_oracle_and_normalization():
    for diags, expected in STD_SUM_CASES:
        assert abs(std_sum_metric(_diag_runs(diags)) - expected) <= 1e-9
    y = std_sum_metric(_diag_runs(STD_SUM_CASES[0][0]))
    assert abs(y - math.sqrt(2)) <= 1e-9
    assert normalize([y], y) == [1.0]


# ---------------------------------------------------------------------------
# 3 enhancement arithmetic


@pytest.mark.criterion(3)
def test_c03_enhancement_arithmetic():
    real = [100, 10, 20, 50, 15, 30]
    assert list(plan_enhancement(real, "a", 0.1).added.counts) == [10, 1, 2, 5, 2, 3]
    assert list(plan_enhancement(real, "b", 0.1).added.counts) == [0, 6, 5, 3, 5, 4]
    assert list(plan_enhancement(real, "c", 0.1).added.counts) == [4, 4, 4, 4, 4, 3]
    rng = seeded_rng(7)
    checked = 0
    for _ in range(1000):
        counts = rng.integers(0, 500, size=6)
        if counts.sum() == 0:
            counts[3] = 1
        for strategy in "abc":
            for p in (0.1, 0.2, 0.5):
                _check_plan(counts.tolist(), strategy, p)
                assert plan_enhancement(counts.tolist(), strategy, p).budget == _budget_oracle(counts.sum(), p)
                checked += 1
    assert checked == 9000


# ---------------------------------------------------------------------------
# 4 and 5 fusion and weighted loss


@pytest.fixture(scope="module")
def fusion_records(default_events):
    eval_events = generate_dataset(GenConfig.from_dict({"scale": 50, "seed": 1000}))
    start = time.perf_counter()
    recs = fusion_study(default_events, ExperimentConfig(), SEEDS, eval_events=eval_events)
    return recs, time.perf_counter() - start


@pytest.mark.slow
@pytest.mark.criterion(4)
def test_c04_fusion_beats_averaging(fusion_records):
    recs, elapsed = fusion_records
    avg = np.mean([accuracy(r["average"]["test"]) for r in recs])
    fus = np.mean([accuracy(r[(1.0, 1.0)]["test"]) for r in recs])
    print(f"event accuracy over {len(recs)} seeds: averaging {avg:.4f}, fusion network {fus:.4f}; {elapsed:.0f}s")
    assert fus > avg
    assert elapsed < 15 * 60


@pytest.mark.slow
@pytest.mark.criterion(5)
def test_c05_jellyfish_weight_trades_fp_for_recall(fusion_records):
    recs, _ = fusion_records
    tp = {w: np.mean([jelly_tp_rate(r[w]["eval"]) for r in recs]) for w in ((1.0, 1.0), (2.0, 1.0))}
    fp = {w: np.mean([jelly_fp_count(r[w]["eval"]) for r in recs]) for w in ((1.0, 1.0), (2.0, 1.0))}
    print(f"jellyfish TP rate {tp}; FP count {fp}")
    assert tp[(2.0, 1.0)] > tp[(1.0, 1.0)]
    assert fp[(2.0, 1.0)] > fp[(1.0, 1.0)]


# ---------------------------------------------------------------------------
# 6 gate sweep


@pytest.mark.criterion(6)
def test_c06_gate_sweep_properties():
    rng = seeded_rng(6)
    taus = default_taus()
    for _ in range(1000):
        n = int(rng.integers(5, 60))
        labels = rng.integers(0, 6, size=n)
        labels[0] = JELLY
        probs = rng.dirichlet(np.full(6, rng.uniform(0.2, 2.0)), size=n)
        points = sweep_threshold(probs, labels, taus)
        tp0, fp0 = _ungated(probs, labels)
        assert points[0].tp_rate == tp0 and points[0].fp_count == fp0
        for pt in points:
            assert (pt.tp_rate, pt.fp_count) == _brute(probs, labels, pt.tau)
        assert all(a.tp_rate >= b.tp_rate and a.fp_count >= b.fp_count for a, b in zip(points, points[1:]))


# ---------------------------------------------------------------------------
# 7 generalization gap


@pytest.mark.slow
@pytest.mark.criterion(7)
def test_c07_held_out_environment_is_harder(default_events):
    gap = generalization_gap(default_events, ExperimentConfig(), SEEDS, held_out=1)
    rand = np.mean([r["event_acc"] for r in gap["random"]])
    loeo = np.mean([r["event_acc"] for r in gap["loeo"]])
    print(f"event accuracy: random split {rand:.4f}, held-out environment {loeo:.4f}")
    assert loeo < rand


# ---------------------------------------------------------------------------
# 8 GAN sanity


@pytest.fixture(scope="module")
def trained_gan(default_events):
    train, _, _ = split_dataset(default_events, SplitSpec(), 0)
    gan, history = train_gan(train, GanTrainConfig(seed=0))
    return train, gan, history


@pytest.mark.criterion(8)
def test_c08_gan_losses_hand_values():
    l_d, l_g = gan_losses(0.5, 0.5)
    assert abs(l_d - (-1.3862943611198906)) < 1e-6
    assert abs(l_g - 0.6931471805599453) < 1e-6


@pytest.mark.slow
@pytest.mark.criterion(8)
def test_c08_generated_means_near_real_centroids(trained_gan):
    train, gan, _ = trained_gan
    centroids = np.stack([
        np.concatenate([to_unit(e.frames).reshape(e.n_frames, -1) for e in train if e.label == c]).mean(axis=0)
        for c in range(6)
    ])
    inter = np.mean([np.linalg.norm(centroids[i] - centroids[j]) for i in range(6) for j in range(i + 1, 6)])
    rng = seeded_rng(8)
    ratios = []
    for c in range(6):
        gen = gan.generate(np.full(2000, c), rng).reshape(2000, -1)
        ratios.append(np.linalg.norm(gen.mean(axis=0) - centroids[c]) / inter)
    print("generated-mean distance / mean inter-class distance:", np.round(ratios, 3).tolist())
    assert max(ratios) < 0.5


@pytest.mark.slow
def test_gan_probe_accuracy_ends_in_band(trained_gan):
    _, _, history = trained_gan
    accs = [r["d_probe_acc"] for r in history]
    print("discriminator probe accuracy per epoch:", np.round(accs, 3).tolist())
    assert 0.5 <= accs[-1] <= 0.9


# ---------------------------------------------------------------------------
# 9 serialization


@pytest.mark.criterion(9)
def test_c09_formats_roundtrip_and_corruption(tmp_path):
    import json

    events = generate_dataset(GenConfig(class_counts=(2, 1, 1, 1, 1, 1), seed=9))
    d = save_dataset(events, tmp_path / "d")
    assert load_dataset(d) == events
    save_dataset(load_dataset(d), tmp_path / "d2")
    assert (d / "frames.bin").read_bytes() == (tmp_path / "d2" / "frames.bin").read_bytes()

    params = build_frame_model(3)
    m = save_model(params, tmp_path / "m")
    assert load_model(m).equal(params)
    save_model(load_model(m), tmp_path / "m2")
    assert (m / "weights.bin").read_bytes() == (tmp_path / "m2" / "weights.bin").read_bytes()

    def corrupt_dataset(name, fn):
        p = save_dataset(events, tmp_path / name)
        doc = json.loads((p / "manifest.json").read_text())
        fn(doc, p)
        (p / "manifest.json").write_text(json.dumps(doc))
        return p

    def corrupt_model(name, fn):
        p = save_model(params, tmp_path / name)
        doc = json.loads((p / "model.json").read_text())
        fn(doc, p)
        (p / "model.json").write_text(json.dumps(doc))
        return p

    seen = set()
    cases = [
        (corrupt_dataset, lambda m, p: m.update(format_version=99), VersionMismatchError),
        (corrupt_dataset, lambda m, p: m["events"][-1].update(n_frames=m["events"][-1]["n_frames"] + 3),
         TruncatedDataError),
        (corrupt_dataset, lambda m, p: m["events"][1].update(byte_offset=m["events"][1]["byte_offset"] + 1024),
         OffsetError),
        (corrupt_dataset, lambda m, p: (p / "frames.bin").open("ab").write(b"\0"), SizeMismatchError),
        (corrupt_dataset, lambda m, p: (p / "frames.bin").unlink(), MissingFileError),
        (corrupt_model, lambda m, p: m["entries"][0].update(dtype="f16"), UnknownDtypeError),
        (corrupt_model, lambda m, p: m["entries"][1].update(name=m["entries"][0]["name"]), DuplicateNameError),
    ]
    for i, (make, fn, err) in enumerate(cases):
        path = make(f"c{i}", fn)
        with pytest.raises(err):
            (load_dataset if make is corrupt_dataset else load_model)(path)
        seen.add(err)
    assert len(seen) == len(cases)


# ---------------------------------------------------------------------------
# 10 bench


@pytest.mark.criterion(10)
def test_c10_bench_curve(tmp_path):
    rows = bench_event_latency(build_frame_model(0), build_fusion_model(0), repetitions=20)
    path = write_latency_csv(rows, tmp_path / "bench.csv")
    assert path.read_text().splitlines()[0] == "length,t_avg_ms,t_fusion_ms,overhead_ratio"
    back = read_latency_csv(path)
    assert [r.length for r in back] == [4, 50, 100, 150, 200, 300]
    for r in back:
        print(f"length {r.length:3d}: avg {r.t_avg_ms:.2f} ms, fusion {r.t_fusion_ms:.2f} ms, "
              f"overhead {r.overhead_ratio:.3f}")
        assert r.overhead_ratio >= 0
    for a, b in zip(back, back[1:]):
        assert b.t_avg_ms >= 0.9 * a.t_avg_ms
