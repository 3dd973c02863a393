import json

import numpy as np
import pytest

from jellysonar.core import ClassCounts, ClassLabel, Event, SplitSpec, seeded_rng, split_dataset
from jellysonar.errors import (
    FormatError,
    MissingFileError,
    OffsetError,
    SizeMismatchError,
    TruncatedDataError,
    VersionMismatchError,
)
from jellysonar.sonargen import (
    DEPLOYMENT,
    TRIAL,
    EnvironmentProfile,
    GenConfig,
    LengthDistribution,
    allocate_counts,
    centroid_baseline,
    generate_dataset,
    generate_event,
    load_dataset,
    render_layers,
    save_dataset,
)


def _area(layer):
    """Pixels of the noise-free object layer above 30% of its peak, per frame."""
    return (layer > 0.3 * layer.max()).sum(axis=(1, 2)).astype(np.float64)


@pytest.fixture(scope="module")
def default_data():
    return generate_dataset(GenConfig())


def test_environment_validation():
    with pytest.raises(ValueError):
        EnvironmentProfile(0, noise_sigma=-1.0, artefact_rate=0.1, background_level=40)
    with pytest.raises(ValueError):
        EnvironmentProfile(0, noise_sigma=1.0, artefact_rate=1.5, background_level=40)


def test_length_distribution_validation():
    with pytest.raises(ValueError):
        LengthDistribution(min=2)
    with pytest.raises(ValueError):
        LengthDistribution(target_mean=400)


def test_mean_length_near_target():
    rng = seeded_rng(0)
    dist = LengthDistribution()
    lengths = np.array([dist.sample(rng) for _ in range(1000)])
    assert 68.4 <= lengths.mean() <= 83.6
    assert lengths.min() >= 4 and lengths.max() <= 300


@pytest.mark.parametrize("label", list(ClassLabel))
def test_event_deterministic(label):
    a = generate_event(label, TRIAL, seeded_rng(5), event_id=3)
    b = generate_event(label, TRIAL, seeded_rng(5), event_id=3)
    assert a == b
    assert a.frames.dtype == np.uint8 and a.frames.shape[1:] == (32, 32)


def test_jellyfish_pulsation_frequency():
    n = 120
    freqs = np.fft.rfftfreq(n)
    for seed in range(40):
        for env in (TRIAL, DEPLOYMENT):
            layer, _ = render_layers(ClassLabel.JELLYFISH, env, n, seeded_rng(seed))
            a = _area(layer)
            power = np.abs(np.fft.rfft(a - a.mean()))
            f = freqs[1:][np.argmax(power[1:])]
            assert 1 / 20 <= f <= 1 / 8


def test_jellyfish_area_amplitude():
    layer, _ = render_layers(ClassLabel.JELLYFISH, TRIAL, 120, seeded_rng(1))
    a = _area(layer)
    assert (a.max() - a.min()) / 2 >= 0.25 * a.mean()


def test_seaweed_area_stable():
    for seed in range(40):
        for env in (TRIAL, DEPLOYMENT):
            layer, _ = render_layers(ClassLabel.SEAWEED, env, 120, seeded_rng(seed))
            a = _area(layer)
            assert a.std() / a.mean() < 0.05


def test_background_has_no_object():
    layer, _ = render_layers(ClassLabel.BACKGROUND, TRIAL, 50, seeded_rng(2))
    # specks move every frame; no pixel stays lit through the event
    assert (layer > 10).mean(axis=0).max() < 0.3


def test_allocate_counts_remainder_to_lowest_env():
    alloc = allocate_counts([5, 0, 1, 2, 3, 4], 2)
    assert alloc.tolist() == [[3, 0, 1, 1, 2, 2], [2, 0, 0, 1, 1, 2]]


def test_default_dataset_counts(default_data):
    assert len(default_data) == 191
    assert ClassCounts.from_labels([e.label for e in default_data]).counts == (55, 6, 19, 64, 16, 31)
    assert sorted(e.id for e in default_data) == list(range(191))
    assert {e.environment_id for e in default_data} == {0, 1}


def test_single_background_event():
    events = generate_dataset(GenConfig(class_counts=(1, 0, 0, 0, 0, 0)))
    assert len(events) == 1 and events[0].label == ClassLabel.BACKGROUND


def test_all_zero_counts_rejected():
    with pytest.raises(ValueError):
        generate_dataset(GenConfig(class_counts=(0,) * 6))


def test_dataset_deterministic():
    cfg = GenConfig(class_counts=(2, 1, 1, 2, 1, 1), seed=9)
    assert generate_dataset(cfg) == generate_dataset(cfg)
    other = generate_dataset(GenConfig(class_counts=(2, 1, 1, 2, 1, 1), seed=10))
    assert generate_dataset(cfg) != other


def test_gen_config_roundtrip():
    cfg = GenConfig(class_counts=(1, 2, 3, 4, 5, 6), seed=4)
    again = GenConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_gen_config_scale():
    assert GenConfig.from_dict({"scale": 100}).class_counts.counts == (55, 6, 19, 64, 16, 31)


def test_centroid_baseline_above_chance(default_data):
    train, _, test = split_dataset(default_data, SplitSpec(), 0)
    assert centroid_baseline(train, test) > 0.40


# ---------------------------------------------------------------------------
# dataset directory format


@pytest.fixture
def small_dataset():
    events = generate_dataset(GenConfig(class_counts=(2, 1, 1, 1, 1, 1), seed=3))
    events.append(Event(1000, 1, np.arange(1024, dtype=np.uint8).reshape(1, 32, 32), -1, synthetic=True))
    return events


def test_roundtrip(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "d", meta={"note": "x"})
    assert load_dataset(tmp_path / "d") == small_dataset
    # bit-exact blob on a second write
    save_dataset(load_dataset(tmp_path / "d"), tmp_path / "e")
    assert (tmp_path / "d" / "frames.bin").read_bytes() == (tmp_path / "e" / "frames.bin").read_bytes()


def test_empty_dataset(tmp_path):
    save_dataset([], tmp_path / "d")
    assert json.loads((tmp_path / "d" / "manifest.json").read_text())["events"] == []
    assert (tmp_path / "d" / "frames.bin").read_bytes() == b""
    assert load_dataset(tmp_path / "d") == []


def _edit_manifest(path, fn):
    m = json.loads((path / "manifest.json").read_text())
    fn(m)
    (path / "manifest.json").write_text(json.dumps(m))


def test_truncated_blob(tmp_path, small_dataset):
    d = save_dataset(small_dataset, tmp_path / "d")
    _edit_manifest(d, lambda m: m["events"][-1].update(n_frames=m["events"][-1]["n_frames"] + 5))
    with pytest.raises(TruncatedDataError):
        load_dataset(d)


def test_trailing_bytes(tmp_path, small_dataset):
    d = save_dataset(small_dataset, tmp_path / "d")
    with open(d / "frames.bin", "ab") as fh:
        fh.write(b"\0")
    with pytest.raises(SizeMismatchError):
        load_dataset(d)


def test_offset_gap(tmp_path, small_dataset):
    d = save_dataset(small_dataset, tmp_path / "d")
    _edit_manifest(d, lambda m: m["events"][1].update(byte_offset=m["events"][1]["byte_offset"] + 1024))
    with pytest.raises(OffsetError):
        load_dataset(d)


def test_version_mismatch(tmp_path, small_dataset):
    d = save_dataset(small_dataset, tmp_path / "d")
    _edit_manifest(d, lambda m: m.update(format_version=99))
    with pytest.raises(VersionMismatchError):
        load_dataset(d)


def test_missing_files(tmp_path, small_dataset):
    with pytest.raises(MissingFileError):
        load_dataset(tmp_path / "nowhere")
    d = save_dataset(small_dataset, tmp_path / "d")
    (d / "frames.bin").unlink()
    with pytest.raises(MissingFileError):
        load_dataset(d)


def test_invalid_json(tmp_path, small_dataset):
    d = save_dataset(small_dataset, tmp_path / "d")
    (d / "manifest.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_dataset(d)


def test_error_types_distinct():
    kinds = [MissingFileError, VersionMismatchError, OffsetError, TruncatedDataError, SizeMismatchError]
    assert len(set(kinds)) == 5
    assert all(issubclass(k, FormatError) for k in kinds)
