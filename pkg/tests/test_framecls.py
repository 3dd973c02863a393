import numpy as np
import pytest

from jellysonar.core import ConfidenceSequence, Event, SplitSpec, split_dataset
from jellysonar.framecls import (
    FrameTrainConfig,
    build_frame_model,
    classify_events,
    classify_frames,
    frame_accuracy,
    frame_confusion,
    frame_net,
    frames_to_input,
    read_confidence_csv,
    train_frame_classifier,
    write_confidence_csv,
)
from jellysonar.sonargen import GenConfig, generate_dataset

# 3*3*1*8+8 + 3*3*8*16+16 + 1024*64+64 + 64*6+6
N_PARAMS = 80 + 1168 + 65600 + 390


def test_parameter_count():
    assert N_PARAMS == 67238
    assert build_frame_model(0).n_params == N_PARAMS


def test_architecture_shapes():
    shapes = frame_net().param_shapes()
    assert shapes["conv1.w"] == (3, 3, 1, 8)
    assert shapes["conv2.w"] == (3, 3, 8, 16)
    assert shapes["fc1.w"] == (1024, 64)
    assert shapes["fc2.w"] == (64, 6)


def test_init_seeded():
    assert build_frame_model(3).equal(build_frame_model(3))
    assert not build_frame_model(3).equal(build_frame_model(4))


def test_frames_to_input_scale():
    x = frames_to_input(np.array([[[0, 255]]], dtype=np.uint8))
    assert x.shape == (1, 1, 2, 1)
    assert x.min() == 0.0 and x.max() == 1.0


def _event(i, label, frames):
    return Event(i, label, np.asarray(frames, dtype=np.uint8))


def test_classify_frames_contract():
    rng = np.random.default_rng(0)
    frames = rng.integers(0, 256, size=(5, 32, 32))
    frames[3] = frames[2]
    seq = classify_frames(build_frame_model(0), _event(7, 1, frames))
    assert isinstance(seq, ConfidenceSequence) and seq.event_id == 7
    assert len(seq) == 5
    np.testing.assert_allclose(seq.vectors.sum(axis=1), 1.0, atol=1e-6)
    assert np.array_equal(seq.vectors[2], seq.vectors[3])


def test_classify_events_matches_per_event():
    rng = np.random.default_rng(1)
    events = [_event(i, i % 6, rng.integers(0, 256, size=(4 + i, 32, 32))) for i in range(4)]
    params = build_frame_model(2)
    batched = classify_events(params, events, batch_size=7)
    for ev, seq in zip(events, batched):
        np.testing.assert_allclose(seq.vectors, classify_frames(params, ev).vectors, atol=1e-12)
    assert classify_events(params, []) == []


def test_frame_accuracy_and_confusion():
    v = np.eye(6)[[0, 0, 1, 2]]
    seqs = [ConfidenceSequence(0, v[:2]), ConfidenceSequence(1, v[2:])]
    assert frame_accuracy(seqs, [0, 2]) == 0.75
    m = frame_confusion(seqs, [0, 2])
    assert m[0, 0] == 2 and m[2, 1] == 1 and m[2, 2] == 1 and m.sum() == 4


def test_confidence_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    seqs = []
    for i in range(3):
        p = rng.random((4 + i, 6))
        seqs.append(ConfidenceSequence(10 + i, p / p.sum(axis=1, keepdims=True)))
    path = write_confidence_csv(seqs, [0, 1, 5], tmp_path / "c.csv")
    assert path.read_bytes().startswith(b"event_id,frame_idx,p0,p1,p2,p3,p4,p5,label\n")
    back, labels = read_confidence_csv(path)
    assert labels == [0, 1, 5]
    for a, b in zip(seqs, back):
        assert a.event_id == b.event_id
        np.testing.assert_allclose(a.vectors, b.vectors, atol=1e-8)


def test_training_errors():
    with pytest.raises(ValueError):
        train_frame_classifier([], [])
    ev = _event(0, 1, np.zeros((4, 32, 32)))
    with pytest.raises(ValueError):
        train_frame_classifier([ev], [])


def test_memorizes_small_set():
    rng = np.random.default_rng(0)
    events = []
    for i in range(20):
        label = i % 4
        base = np.zeros((32, 32))
        base[label * 8:(label + 1) * 8] = 200
        frame = np.clip(base + rng.normal(0, 30, (32, 32)), 0, 255)
        events.append(Event(i, label, frame[None].astype(np.uint8), synthetic=True))
    real_val = [Event(100 + e.id, e.label, np.repeat(e.frames, 4, axis=0)) for e in events]
    cfg = FrameTrainConfig(epochs=40, patience=40, batch_size=10, lr=3e-3, seed=1)
    params, log = train_frame_classifier(events, real_val, cfg)
    seqs = classify_events(params, real_val)
    assert frame_accuracy(seqs, [e.label for e in real_val]) >= 0.95


def test_training_deterministic():
    data = generate_dataset(GenConfig(class_counts=(3, 2, 2, 3, 2, 2), seed=1))
    tr, va, _ = split_dataset(data, SplitSpec(), 0)
    cfg = FrameTrainConfig(epochs=2, frames_per_event=4, seed=5)
    a, la = train_frame_classifier(tr, va, cfg)
    b, lb = train_frame_classifier(tr, va, cfg)
    assert a.equal(b) and la == lb


def test_early_stopping_patience():
    data = generate_dataset(GenConfig(class_counts=(3, 2, 2, 3, 2, 2), seed=1))
    tr, va, _ = split_dataset(data, SplitSpec(), 0)
    _, log = train_frame_classifier(tr, va, FrameTrainConfig(epochs=8, patience=1, frames_per_event=4))
    assert 1 <= len(log) <= 8
    if len(log) < 8:
        # stopped right after the first epoch that failed to improve
        assert log[-1]["val_acc"] <= max(r["val_acc"] for r in log[:-1])


@pytest.mark.slow
def test_default_data_validation_accuracy():
    data = generate_dataset(GenConfig())
    tr, va, _ = split_dataset(data, SplitSpec(), 0)
    _, log = train_frame_classifier(tr, va, FrameTrainConfig(epochs=30, seed=0))
    assert max(r["val_acc"] for r in log) > 0.60
