import random
from dataclasses import dataclass, field

import pytest

from pamdi.metrics import IncompleteTraceError, TaskRecord, average_inference_time, per_data_point_times, summary


@dataclass
class FakeTrace:
    records: list
    num_data_points: dict
    k: dict
    results: dict = field(default_factory=dict)

    def partitions_of(self, sid):
        return self.k[sid]


def _records(latencies, d_count):
    out = []
    for d in range(1, d_count + 1):
        t = 10.0 * d
        for k, lat in enumerate(latencies, start=1):
            out.append(TaskRecord("s", d, k, t, t + lat, "A"))
            t += lat
    return out


def test_single_partition_average():
    trace = FakeTrace(_records([2.0], 5), {"s": 5}, {"s": {d: 1 for d in range(1, 6)}})
    assert average_inference_time(trace, "s") == pytest.approx(2.0)


def test_two_partitions_sum():
    trace = FakeTrace(_records([1.0, 3.0], 4), {"s": 4}, {"s": {d: 2 for d in range(1, 5)}})
    assert average_inference_time(trace, "s") == pytest.approx(4.0)


def test_empty_source_rejected():
    with pytest.raises(IncompleteTraceError):
        average_inference_time(FakeTrace([], {"s": 0}, {"s": {}}), "s")


def test_missing_task_named():
    recs = _records([1.0, 1.0], 2)[:-1]
    with pytest.raises(IncompleteTraceError, match=r"\(d=2,k=2\)"):
        per_data_point_times(recs, "s", 2, {1: 2, 2: 2})


def test_invariant_under_reordering():
    recs = _records([0.5, 1.5, 2.5], 6)
    k = {"s": {d: 3 for d in range(1, 7)}}
    before = average_inference_time(FakeTrace(list(recs), {"s": 6}, k), "s")
    random.Random(3).shuffle(recs)
    assert average_inference_time(FakeTrace(recs, {"s": 6}, k), "s") == before


def test_summary_marks_incomplete_sources():
    trace = FakeTrace(_records([1.0], 2), {"s": 2, "t": 1}, {"s": {1: 1, 2: 1}, "t": {}},
                      results={"s": {1: 11.0, 2: 21.0}, "t": {}})
    rows = summary(trace)
    assert rows["s"]["makespan"] == 21.0 and rows["s"]["avg_inference_time"] == pytest.approx(1.0)
    assert rows["t"]["avg_inference_time"] is None and "missing" in rows["t"]["error"]
