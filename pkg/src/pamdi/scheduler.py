"""Per-worker task selection, the delay-to-priority offload rule, and data-point admission."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .costs import StatusSnapshot
from .model import Task, Workload


def fetch_key(task: Task):
    # highest priority first, then oldest, then a fixed id order
    return (-task.priority, task.created_at, task.source_id, task.data_index, task.partition_index)


class TaskQueue:
    """The set of tasks a worker still has to process or hand off."""

    def __init__(self, tasks: Iterable[Task] = ()):
        self._tasks: Dict[Tuple, Task] = {}
        for t in tasks:
            self.add(t)

    def add(self, task: Task) -> None:
        if task.task_id in self._tasks:
            raise ValueError(f"task {task.task_id} already queued")
        self._tasks[task.task_id] = task

    def remove(self, task: Task) -> None:
        del self._tasks[task.task_id]

    def __contains__(self, task: Task) -> bool:
        return task.task_id in self._tasks

    def __len__(self) -> int:
        return len(self._tasks)

    def __iter__(self):
        return iter(self._tasks.values())


def fetch_next(queue: TaskQueue, now: float) -> Optional[Task]:
    """The highest-priority task, oldest among equals; the task stays queued."""
    best = None
    best_key = None
    for task in queue:
        key = fetch_key(task)
        if best_key is None or key < best_key:
            best, best_key = task, key
    return best


@dataclass(frozen=True)
class OffloadDecision:
    chosen_worker: str
    score: float
    per_candidate_scores: Dict[str, float]


def offload_score(task: Task, snapshot: StatusSnapshot, delay: float, now: float) -> float:
    numerator = delay + task.age(now) + task.flops * snapshot.seconds_per_flop + snapshot.backlog_sec
    return numerator / (task.priority * task.accuracy_gain)


def decide_offload(task: Task, self_id: str, candidates: Iterable[str],
                   snapshots: Mapping[str, StatusSnapshot], delays: Mapping[str, float],
                   now: float) -> OffloadDecision:
    """Pick the candidate minimising (delay + age + compute + backlog) / (priority * gain).

    Ties go to the lexicographically lowest worker id.
    """
    candidates = sorted(set(candidates))
    if not candidates:
        raise ValueError("empty candidate set")
    scores = {}
    for j in candidates:
        d = 0.0 if j == self_id else delays[j]
        scores[j] = offload_score(task, snapshots[j], d, now)
    chosen = candidates[0]
    for j in candidates[1:]:
        if scores[j] < scores[chosen]:
            chosen = j
    return OffloadDecision(chosen, scores[chosen], scores)


@dataclass(frozen=True)
class EnqueueTask:
    task: Task


@dataclass(frozen=True)
class RecordResult:
    source_id: str
    data_index: int


@dataclass(frozen=True)
class SendOutput:
    source_id: str
    data_index: int
    to_worker: str
    payload_bytes: float


def on_task_done(task: Task, worker_id: str, workload: Workload, now: float) -> list:
    """Consequences of finishing ``task`` locally on ``worker_id``.

    Admission of the next data point at the source host is left to the caller
    (see :class:`Admissions`), since it also depends on offload events.
    """
    if not task.is_last:
        nxt = workload.make_task(task.source_id, task.partition_index + 1, task.data_index, now)
        return [EnqueueTask(nxt)]
    host = workload.source(task.source_id).host_worker
    if worker_id == host:
        return [RecordResult(task.source_id, task.data_index)]
    return [SendOutput(task.source_id, task.data_index, host, task.output_bytes)]


class Admissions:
    """Creates first-partition tasks for successive data points, at most once per index."""

    def __init__(self, workload: Workload):
        self.workload = workload
        self.admitted: Dict[str, Set[int]] = {s: set() for s in workload.sources}

    def start(self, source_id: str, now: float) -> Optional[Task]:
        return self._admit(source_id, 1, now)

    def admit_next(self, source_id: str, finished_index: int, now: float) -> Optional[Task]:
        return self._admit(source_id, finished_index + 1, now)

    def _admit(self, source_id: str, d: int, now: float) -> Optional[Task]:
        if d > self.workload.source(source_id).num_data_points or d in self.admitted[source_id]:
            return None
        self.admitted[source_id].add(d)
        return self.workload.make_task(source_id, 1, d, now)

    def count(self, source_id: str) -> int:
        return len(self.admitted[source_id])
