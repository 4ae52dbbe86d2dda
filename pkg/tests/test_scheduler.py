import pytest
from hypothesis import given, strategies as st

from pamdi.costs import StatusSnapshot
from pamdi.model import SourceSpec, Task, Workload, uniform_model, uniform_partition
from pamdi.scheduler import (Admissions, EnqueueTask, RecordResult, SendOutput, TaskQueue, decide_offload,
                             fetch_next, offload_score, on_task_done)


def _task(sid="s", k=1, d=1, created=0.0, flops=1e9, priority=1.0, gain=1.0, parts=2):
    return Task(sid, k, d, created, flops, 1e5, 1e5, num_partitions=parts, priority=priority, accuracy_gain=gain)


def _workload(d=3, k=2):
    model = uniform_model("m", 4, 1e9, 1e5)
    src = SourceSpec("s", "A", "m", 1.0, num_data_points=d)
    return Workload([src], {"m": model}, {"s": uniform_partition(model, k)})


def test_fetch_prefers_priority_then_age():
    q = TaskQueue([_task("lo", created=0.0, priority=1.0), _task("hi", created=5.0, priority=10.0),
                   _task("hi", d=2, created=3.0, priority=10.0)])
    assert fetch_next(q, 6.0).task_id == ("hi", 2, 1)
    assert len(q) == 3  # peek only


def test_fetch_tie_breaks_by_id():
    q = TaskQueue([_task("b"), _task("a", d=2), _task("a")])
    assert fetch_next(q, 0.0).task_id == ("a", 1, 1)


def test_queue_rejects_duplicates():
    q = TaskQueue([_task()])
    with pytest.raises(ValueError):
        q.add(_task())
    assert fetch_next(TaskQueue(), 0.0) is None


def test_offload_score_terms():
    task = _task(created=1.0, flops=2e9, priority=2.0, gain=0.5)
    snap = StatusSnapshot("B", 1e-9, 3.0, 4.0)
    # (delay + age + compute + backlog) / (gamma * alpha)
    assert offload_score(task, snap, 0.5, now=4.0) == pytest.approx((0.5 + 3.0 + 2.0 + 3.0) / 1.0)


def test_decide_picks_fast_idle_neighbor():
    task = _task(flops=4e9)
    snaps = {"A": StatusSnapshot("A", 1e-9, 0.0, 0), "B": StatusSnapshot("B", 2.5e-10, 0.0, 0),
             "C": StatusSnapshot("C", 2.5e-10, 5.0, 0)}
    dec = decide_offload(task, "A", ["A", "B", "C"], snaps, {"B": 0.5, "C": 0.1}, 0.0)
    assert dec.chosen_worker == "B"
    assert dec.per_candidate_scores["A"] == pytest.approx(4.0)


def test_decide_tie_goes_to_lowest_id():
    task = _task()
    snaps = {w: StatusSnapshot(w, 1e-9, 0.0, 0) for w in "ABC"}
    assert decide_offload(task, "C", ["C", "B", "A"], snaps, {"A": 0.0, "B": 0.0}, 0.0).chosen_worker == "A"
    with pytest.raises(ValueError):
        decide_offload(task, "A", [], snaps, {}, 0.0)


@given(st.floats(0.01, 1000), st.floats(0.01, 100), st.lists(st.tuples(st.floats(1e-11, 1e-8), st.floats(0, 10),
                                                                          st.floats(0, 5)), min_size=1, max_size=5))
def test_priority_never_changes_placement(gamma, alpha, workers):
    ids = [f"w{i}" for i in range(len(workers))]
    snaps = {w: StatusSnapshot(w, spf, q, 0) for w, (spf, q, _) in zip(ids, workers)}
    delays = {w: d for w, (_, _, d) in zip(ids, workers)}
    base = decide_offload(_task(), ids[0], ids, snaps, delays, 1.0).chosen_worker
    weighted = decide_offload(_task(priority=gamma, gain=alpha), ids[0], ids, snaps, delays, 1.0).chosen_worker
    assert base == weighted


def test_task_done_creates_successor():
    wl = _workload()
    [action] = on_task_done(wl.make_task("s", 1, 1, 0.0), "B", wl, 2.0)
    assert isinstance(action, EnqueueTask)
    assert action.task.task_id == ("s", 1, 2) and action.task.created_at == 2.0


def test_task_done_last_partition():
    wl = _workload()
    last = wl.make_task("s", 2, 1, 0.0)
    assert on_task_done(last, "A", wl, 3.0) == [RecordResult("s", 1)]
    [out] = on_task_done(last, "B", wl, 3.0)
    assert isinstance(out, SendOutput) and out.to_worker == "A"


def test_admission_is_idempotent():
    adm = Admissions(_workload(d=2))
    assert adm.start("s", 0.0).task_id == ("s", 1, 1)
    assert adm.admit_next("s", 1, 1.0).task_id == ("s", 2, 1)
    # output return for d=1 arriving after the offload trigger already admitted d=2
    assert adm.admit_next("s", 1, 2.0) is None
    assert adm.admit_next("s", 2, 3.0) is None  # D exhausted
    assert adm.count("s") == 2
