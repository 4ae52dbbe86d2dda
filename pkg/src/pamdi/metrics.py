"""Average inference time and per-run summaries computed from simulation traces."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional


class IncompleteTraceError(ValueError):
    pass


@dataclass(frozen=True)
class TaskRecord:
    source_id: str
    data_index: int
    partition_index: int
    created_at: float
    completed_at: float
    processed_by: str

    @property
    def latency(self) -> float:
        return self.completed_at - self.created_at


def per_data_point_times(records: Iterable[TaskRecord], source_id: str, num_data_points: int,
                         num_partitions: Dict[int, int]) -> Dict[int, float]:
    """Sum of task latencies per data point; ``num_partitions`` maps data index to K."""
    sums: Dict[int, float] = {}
    seen: Dict[int, set] = {}
    for r in records:
        if r.source_id != source_id:
            continue
        sums[r.data_index] = sums.get(r.data_index, 0.0) + r.latency
        seen.setdefault(r.data_index, set()).add(r.partition_index)
    missing = []
    for d in range(1, num_data_points + 1):
        k_total = num_partitions.get(d)
        got = seen.get(d, set())
        if k_total is None:
            missing.append((d, 1))
            continue
        for k in range(1, k_total + 1):
            if k not in got:
                missing.append((d, k))
    if missing:
        head = ", ".join(f"(d={d},k={k})" for d, k in missing[:10])
        raise IncompleteTraceError(f"source {source_id}: missing tasks {head}"
                                   + (" ..." if len(missing) > 10 else ""))
    return {d: sums[d] for d in range(1, num_data_points + 1)}


def average_inference_time(trace, source_id: str) -> float:
    """Mean over data points of the summed (completion - creation) of their tasks."""
    n = trace.num_data_points.get(source_id, 0)
    if n < 1:
        raise IncompleteTraceError(f"source {source_id}: no data points")
    times = per_data_point_times(trace.records, source_id, n, trace.partitions_of(source_id))
    return sum(times.values()) / n


def summary(trace) -> Dict[str, dict]:
    out = {}
    for sid in sorted(trace.num_data_points):
        row = {
            "data_points": trace.num_data_points[sid],
            "results": len(trace.results.get(sid, {})),
        }
        try:
            row["avg_inference_time"] = average_inference_time(trace, sid)
        except IncompleteTraceError as exc:
            row["avg_inference_time"] = None
            row["error"] = str(exc)
        done = trace.results.get(sid, {})
        row["makespan"] = max(done.values()) if done else None
        out[sid] = row
    return out
