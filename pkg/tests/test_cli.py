import csv
import json

import pytest

from jellysonar import __version__
from jellysonar.cli import main
from jellysonar.sonargen import load_dataset

FAST = {
    "frame": {"epochs": 1, "frames_per_event": 4},
    "fusion": {"epochs": 2},
    "gan": {"epochs": 1, "frames_per_class": 16, "probe_size": 8},
}


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "fast.json").write_text(json.dumps(FAST))
    assert main(["gen", "--out", str(d / "data"), "--scale", "400", "--seed", "2"]) == 0
    return d


def _run(workdir, *argv):
    return main([argv[0], "--config", str(workdir / "fast.json"), *argv[1:]])


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_gen_writes_dataset_and_config(workdir):
    events = load_dataset(workdir / "data")
    assert len(events) > 0 and not any(e.synthetic for e in events)
    cfg = json.loads((workdir / "data" / "config.json").read_text())
    assert cfg["gen"]["seed"] == 2


def test_unknown_config_key_named(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"frame": {"epochz": 3}}))
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "d")]) == 1
    err = _error(capsys)
    assert err["error"] == "ConfigError" and "epochz" in err["message"]


def test_unknown_config_section_named(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"frames": {}}))
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "d")]) == 1
    assert "frames" in _error(capsys)["message"]


def test_eval_needs_two_runs(workdir, capsys):
    assert _run(workdir, "eval", "--data", str(workdir / "data"), "--runs", "1", "--out", str(workdir / "e1")) == 1
    err = _error(capsys)
    assert err["error"] == "ConfigError" and "runs must be >= 2" in err["message"]


def test_missing_data_dir(tmp_path, capsys):
    assert main(["train-frame", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m")]) == 1
    assert "nope" in _error(capsys)["message"]


def test_frame_event_sweep_chain(workdir):
    data, fm, em = workdir / "data", workdir / "frame", workdir / "event"
    assert _run(workdir, "train-frame", "--data", str(data), "--out", str(fm), "--seed", "1") == 0
    assert (fm / "config.json").exists()
    assert _run(workdir, "train-event", "--frame-model", str(fm), "--data", str(data),
                "--wx", "2", "--out", str(em)) == 0
    with open(em / "predictions.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) >= {"event_id", "pred", "label"}
    out = workdir / "sweep.csv"
    assert main(["sweep", "--predictions", str(em / "predictions.csv"), "--min", "0", "--max", "0.5",
                 "--step", "0.25", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "tau,tp_rate,fp_count,fp_rate" and len(lines) == 4


def test_gan_synth_chain(workdir):
    gan, syn = workdir / "gan", workdir / "syn"
    assert _run(workdir, "train-gan", "--data", str(workdir / "data"), "--out", str(gan)) == 0
    assert main(["synth", "--gan", str(gan), "--strategy", "c", "--fraction", "0.1",
                 "--counts", "10,10,10,10,10,10", "--out", str(syn)]) == 0
    events = load_dataset(syn)
    assert len(events) == 6 and all(e.synthetic and e.n_frames == 1 for e in events)
    assert min(e.id for e in events) == 1_000_000


def test_eval_writes_report(workdir):
    out = workdir / "eval"
    assert _run(workdir, "eval", "--data", str(workdir / "data"), "--runs", "2", "--out", str(out)) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["reports"][0]["n_runs"] == 2


def test_bench(workdir):
    out = workdir / "bench.csv"
    assert main(["bench", "--lengths", "4,20", "--repetitions", "10", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "length,t_avg_ms,t_fusion_ms,overhead_ratio" and len(lines) == 3
    assert out.with_suffix(".json").exists()


def test_bench_rejects_few_repetitions(tmp_path, capsys):
    assert main(["bench", "--repetitions", "3", "--out", str(tmp_path / "b.csv")]) == 1
    assert "repetitions" in _error(capsys)["message"]
