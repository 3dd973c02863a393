import json

import pytest

from jellysonar.benchkit import (
    LatencyRow,
    bench_backends,
    bench_event_latency,
    read_latency_csv,
    trimmed_mean,
    write_backend_csv,
    write_latency_csv,
)
from jellysonar.eventfuse import build_fusion_model
from jellysonar.framecls import build_frame_model
from jellysonar.nnkit import available_backends


def test_trimmed_mean_drops_extremes():
    assert trimmed_mean([100.0, 1.0, 2.0, 3.0, -50.0]) == 2.0
    assert trimmed_mean([1.0, 3.0]) == 2.0


def test_latency_rows_shape_and_overhead():
    rows = bench_event_latency(build_frame_model(0), build_fusion_model(0), lengths=(4, 40), repetitions=10)
    assert [r.length for r in rows] == [4, 40]
    for r in rows:
        assert r.t_avg_ms > 0 and r.t_fusion_ms > 0
        assert r.overhead_ratio >= 0
        assert r.overhead_ratio == pytest.approx(r.t_fusion_ms / r.t_avg_ms - 1)


@pytest.mark.parametrize("kwargs", [{"lengths": (3,)}, {"lengths": (301,)}, {"lengths": ()}, {"repetitions": 9}])
def test_latency_validation(kwargs):
    args = {"lengths": (4,), "repetitions": 10, **kwargs}
    with pytest.raises(ValueError):
        bench_event_latency(build_frame_model(0), build_fusion_model(0), **args)


def test_latency_csv_roundtrip(tmp_path):
    rows = [LatencyRow(4, 1.5, 2.0, 1 / 3), LatencyRow(300, 80.0, 84.0, 0.05)]
    path = write_latency_csv(rows, tmp_path / "b.csv", meta={"repetitions": 10})
    assert path.read_text().splitlines()[0] == "length,t_avg_ms,t_fusion_ms,overhead_ratio"
    back = read_latency_csv(path)
    assert [r.length for r in back] == [4, 300]
    assert back[1].overhead_ratio == pytest.approx(0.05)
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["repetitions"] == 10 and "machine" in side
    assert side["max_overhead_ratio"] == pytest.approx(1 / 3)


def test_backend_bench(tmp_path):
    rows = bench_backends(batch_sizes=(8,), repetitions=3)
    names = {r.backend for r in rows}
    assert names == set(available_backends())
    assert {r.task for r in rows} == {"inference", "train_step"}
    lines = write_backend_csv(rows, tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "backend,task,batch,t_ms" and len(lines) == 1 + len(rows)
