"""Deterministic discrete-event engine.

One global clock and a heap of ``(time, seq, callback, args)`` entries; equal
times are processed in insertion order, so a (scenario, seed) pair always
replays to the same trace.  Links serialise data transfers FIFO (per link, or
through one shared medium); small control frames are not queued behind bulk
transfers.

Policies (PA-MDI, the ring baselines, Local) drive the workers' processing
threads; the engine owns time, transmission, churn and bookkeeping.
"""
from __future__ import annotations

import heapq
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import protocol as proto
from .baselines import RingChain, restore_chain, substitute_worker
from .config import ConfigError, ScenarioConfig, validate_scenario
from .costs import CONTROL_MESSAGE_BYTES, NoPathError, StatusSnapshot, path_delay, shortest_path, transfer_delay
from .metrics import TaskRecord, summary
from .model import PartitionPlan, Task, uniform_partition, weighted_partition
from .protocol import (CTC, RTC, FeatureTransfer, GrantIssued, Handshake, InsertTask, Message, OutputArrived,
                       OutputReturn, Send, StatusReply, StatusRequest, WorkerState, handle_message)
from .scheduler import Admissions, EnqueueTask, RecordResult, SendOutput, decide_offload, fetch_next, on_task_done

log = logging.getLogger(__name__)


class DeadlockError(RuntimeError):
    pass


@dataclass
class SimulationTrace:
    lines: List[str]
    records: List[TaskRecord]
    results: Dict[str, Dict[int, float]]
    num_data_points: Dict[str, int]
    k_by_point: Dict[str, Dict[int, int]]
    truncated: bool
    end_time: float
    message_counts: Dict[str, int]
    violations: List[str]
    churn_intervals: List[float] = field(default_factory=list)
    admitted: Dict[str, int] = field(default_factory=dict)

    def partitions_of(self, source_id: str) -> Dict[int, int]:
        return self.k_by_point.get(source_id, {})

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @property
    def protocol_messages(self) -> int:
        return sum(self.message_counts.values())

    def metrics(self) -> Dict[str, dict]:
        return summary(self)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    if isinstance(value, tuple):
        return "/".join(str(v) for v in value)
    return str(value)


class Cpu:
    """Processor sharing among lanes (one lane behaves as a plain FIFO server)."""

    def __init__(self, sim: "Simulation", worker_id: str):
        self.sim = sim
        self.worker_id = worker_id
        self.jobs: Dict[object, list] = {}
        self.last = 0.0
        self.token = 0

    def busy(self, lane) -> bool:
        return lane in self.jobs

    def start(self, lane, task: Task, duration: float, on_done: Callable[[Task], None]) -> None:
        if lane in self.jobs:
            raise RuntimeError(f"{self.worker_id}: lane {lane} already computing")
        self._settle()
        self.jobs[lane] = [task, duration, on_done]
        self._reschedule()

    def _settle(self) -> None:
        now = self.sim.now
        n = len(self.jobs)
        if n:
            share = (now - self.last) / n
            for job in self.jobs.values():
                job[1] -= share
        self.last = now

    def _reschedule(self) -> None:
        self.token += 1
        n = len(self.jobs)
        for lane in sorted(self.jobs, key=str):
            remaining = max(self.jobs[lane][1], 0.0)
            self.sim.schedule(self.sim.now + remaining * n, self._complete, lane, self.token)

    def _complete(self, lane, token) -> None:
        if token != self.token:
            return
        self._settle()
        task, _, on_done = self.jobs.pop(lane)
        self._reschedule()
        self.sim.trace("ComputeComplete", worker=self.worker_id, task=task.task_id)
        on_done(task)


class Simulation:
    def __init__(self, config: ScenarioConfig):
        problems = validate_scenario(config)
        if problems:
            raise ConfigError(problems)
        self.config = config
        self.workload = config.workload()
        self.topology = config.topology()
        self.churn = config.churn_process()
        self.max_sim_time = config.max_sim_time
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.lines: List[str] = []
        self.records: List[TaskRecord] = []
        self.results: Dict[str, Dict[int, float]] = {sid: {} for sid in self.workload.sources}
        self.k_by_point: Dict[str, Dict[int, int]] = {sid: {} for sid in self.workload.sources}
        self.message_counts: Counter = Counter()
        self.violations: List[str] = []
        self.processed: Counter = Counter()
        self.churn_intervals: List[float] = []
        self._last_churn: Dict[str, float] = {}
        self.rng = np.random.default_rng([config.seed, 1])
        self.jitter = config.compute_jitter
        self.shared_medium = config.network.get("medium", "per_link") == "shared"
        self.link_free: Dict[object, float] = {}
        self.held: Dict[str, list] = {w: [] for w in self.topology.workers}
        priority_backlog = config.protocol.get("backlog", "total") == "priority"
        self.workers: Dict[str, WorkerState] = {
            wid: WorkerState(p, env=self, priority_backlog=priority_backlog)
            for wid, p in self.topology.workers.items()
        }
        self.cpus = {wid: Cpu(self, wid) for wid in self.topology.workers}
        self.admissions = Admissions(self.workload)
        algo = config.algorithm
        if algo == "PA-MDI":
            self.policy = PaMdiPolicy(self)
        elif algo in ("AR-MDI", "MS-MDI"):
            self.policy = RingPolicy(self, algo)
        else:
            self.policy = LocalPolicy(self)

    # ---- event machinery ------------------------------------------------

    def schedule(self, time: float, callback, *args) -> None:
        if time < self.now:
            raise RuntimeError(f"causality violation: event at {time} scheduled at {self.now}")
        heapq.heappush(self._heap, (time, self._seq, callback, args))
        self._seq += 1

    def trace(self, event: str, **fields) -> None:
        parts = [f"{self.now:.9f}", event]
        parts.extend(f"{k}={_fmt(v)}" for k, v in fields.items())
        self.lines.append(" ".join(parts))

    def done(self) -> bool:
        return all(len(self.results[sid]) == src.num_data_points for sid, src in self.workload.sources.items())

    def run(self) -> SimulationTrace:
        if self.churn is not None:
            for t, worker, kind in self.churn.schedule(self.max_sim_time):
                self.schedule(t, self._churn_event, worker, kind)
        self.policy.start()
        truncated = False
        while self._heap and not self.done():
            time, _, callback, args = heapq.heappop(self._heap)
            if time > self.max_sim_time:
                truncated = True
                break
            self.now = time
            callback(*args)
        if not self.done() and not truncated:
            raise DeadlockError(self._diagnose())
        return SimulationTrace(
            lines=self.lines,
            records=self.records,
            results=self.results,
            num_data_points={sid: s.num_data_points for sid, s in self.workload.sources.items()},
            k_by_point=self.k_by_point,
            truncated=truncated,
            end_time=self.now,
            message_counts=dict(sorted(self.message_counts.items())),
            violations=self.violations + self._final_checks(truncated),
            churn_intervals=self.churn_intervals,
            admitted={sid: self.admissions.count(sid) for sid in self.workload.sources},
        )

    def _diagnose(self) -> str:
        lines = [f"no events left at t={self.now:.6f} with work remaining"]
        for sid, src in self.workload.sources.items():
            lines.append(f"  source {sid}: {len(self.results[sid])}/{src.num_data_points} results")
        for wid, ws in sorted(self.workers.items()):
            lines.append(f"  worker {wid}: queued={len(ws.queue)} computing={ws.computing and ws.computing.task_id}"
                         f" held={len(self.held[wid])} present={ws.present}")
        return "\n".join(lines)

    def _final_checks(self, truncated: bool) -> List[str]:
        out = []
        for tid, n in self.processed.items():
            if n > 1:
                out.append(f"task {tid} processed {n} times")
        if not truncated:
            for sid, src in self.workload.sources.items():
                missing = [d for d in range(1, src.num_data_points + 1) if d not in self.results[sid]]
                if missing:
                    out.append(f"source {sid}: lost data points {missing[:10]}")
        return out

    # ---- compute ----------------------------------------------------------

    def compute_duration(self, worker: str, task: Task) -> float:
        nominal = task.flops * self.topology.workers[worker].seconds_per_flop
        if self.jitter > 0:
            sigma2 = math.log1p(self.jitter ** 2)
            nominal *= float(self.rng.lognormal(-sigma2 / 2, math.sqrt(sigma2)))
        return nominal

    def record_task(self, task: Task, worker: str) -> None:
        self.processed[task.task_id] += 1
        self.records.append(TaskRecord(task.source_id, task.data_index, task.partition_index,
                                       task.created_at, self.now, worker))

    def record_result(self, source_id: str, d: int) -> None:
        if d in self.results[source_id]:
            self.violations.append(f"duplicate result for {source_id}/{d}")
            return
        self.results[source_id][d] = self.now
        self.trace("Result", source=source_id, d=d)

    def note_created(self, task: Task, worker: str) -> None:
        self.k_by_point[task.source_id].setdefault(task.data_index, task.num_partitions)
        self.trace("TaskCreated", worker=worker, task=task.task_id, flops=task.flops)

    # ---- network: what a worker can observe ----------------------------------

    def present(self, worker: str) -> bool:
        return self.topology.is_present(worker)

    def neighbors(self, worker: str) -> List[str]:
        return self.topology.neighbors(worker)

    def control_delay(self, a: str, b: str) -> float:
        return transfer_delay(CONTROL_MESSAGE_BYTES, self.topology.link(a, b))

    def data_delay(self, a: str, b: str, nbytes: float) -> float:
        return transfer_delay(nbytes, self.topology.link(a, b))

    def rtc_timeout(self, worker: str) -> float:
        override = self.config.protocol.get("rtc_timeout")
        if override is not None:
            return float(override)
        nbrs = self.topology.configured_neighbors(worker)
        if not nbrs:
            return 1.0
        return 3.0 * max(2.0 * self.control_delay(worker, n) for n in nbrs)

    # ---- network: transmission --------------------------------------------------

    def send_control(self, msg: Message) -> None:
        if not self.present(msg.sender):
            return
        self.message_counts[msg.kind] += 1
        arrive = self.now + self.control_delay(msg.sender, msg.recipient)
        self.trace("MessageSend", msg=msg.kind, src=msg.sender, dst=msg.recipient)
        self.schedule(arrive, self._deliver_control, msg)

    def _deliver_control(self, msg: Message) -> None:
        if not self.present(msg.recipient):
            self.trace("MessageLost", msg=msg.kind, src=msg.sender, dst=msg.recipient)
            return
        self.trace("MessageDelivery", msg=msg.kind, src=msg.sender, dst=msg.recipient)
        self.policy.on_control(msg.recipient, msg)

    def _reserve(self, a: str, b: str, nbytes: float) -> Tuple[float, float]:
        link = self.topology.link(a, b)
        key = "medium" if self.shared_medium else link.endpoints
        start = max(self.now, self.link_free.get(key, 0.0))
        end = start + nbytes / link.bandwidth_bytes_per_sec
        self.link_free[key] = end
        return end, end + link.propagation_delay_sec

    def send_data(self, msg: Message, holder: str, on_sent: Optional[Callable[[], None]] = None) -> None:
        """Route ``msg`` hop by hop toward ``msg.recipient``; ``on_sent`` fires when the first hop is on the wire."""
        self.message_counts[msg.kind] += 1
        self.trace("MessageSend", msg=msg.kind, src=msg.sender, dst=msg.recipient, bytes=msg.payload_bytes)
        self._forward(msg, holder, on_sent)

    def _forward(self, msg: Message, holder: str, on_sent=None) -> None:
        if holder == msg.recipient:
            self.trace("MessageDelivery", msg=msg.kind, src=msg.sender, dst=msg.recipient)
            self.policy.on_data(holder, msg)
            if on_sent:
                on_sent()
            return
        try:
            if not self.present(holder):
                raise NoPathError(holder)
            _, path = shortest_path(self.topology, holder, msg.recipient, msg.payload_bytes)
        except NoPathError:
            self.held[holder].append(msg)
            self.trace("MessageHeld", msg=msg.kind, at=holder, dst=msg.recipient)
            if on_sent:
                on_sent()
            return
        nxt = path[1]
        sent, arrive = self._reserve(holder, nxt, msg.payload_bytes)
        self.schedule(arrive, self._hop_arrive, msg, holder, nxt)
        if on_sent:
            self.schedule(sent, on_sent)

    def _hop_arrive(self, msg: Message, frm: str, at: str) -> None:
        if not self.present(at):
            self.trace("MessageBounce", msg=msg.kind, at=at, back_to=frm)
            self.policy.on_bounce(frm, msg)
            return
        if at == msg.recipient:
            self.trace("MessageDelivery", msg=msg.kind, src=msg.sender, dst=msg.recipient)
            self.policy.on_data(at, msg)
        else:
            self.trace("MessageRelay", msg=msg.kind, at=at, dst=msg.recipient)
            self._forward(msg, at)

    def retry_held(self) -> None:
        for holder in sorted(self.held):
            if not self.held[holder] or not self.present(holder):
                continue
            pending, self.held[holder] = self.held[holder], []
            for msg in pending:
                self._forward(msg, holder)

    # ---- churn -----------------------------------------------------------------

    def _churn_event(self, worker: str, kind: str) -> None:
        self.churn_intervals.append(self.now - self._last_churn.get(worker, 0.0))
        self._last_churn[worker] = self.now
        if kind == "leave":
            self.apply_churn_leave(worker)
        else:
            self.apply_churn_return(worker)

    def apply_churn_leave(self, worker: str) -> None:
        if not self.present(worker):
            return
        self.topology.present.discard(worker)
        self.workers[worker].present = False
        self.trace("ChurnLeave", worker=worker)
        self.policy.on_leave(worker)
        self.retry_held()

    def apply_churn_return(self, worker: str) -> None:
        if self.present(worker):
            return
        self.topology.present.add(worker)
        self.workers[worker].present = True
        self.trace("ChurnReturn", worker=worker)
        self.policy.on_return(worker)
        self.retry_held()


# ---------------------------------------------------------------------------
# PA-MDI


IDLE, STATUS, HANDSHAKE, COMPUTE, SENDING = "idle", "status", "handshake", "compute", "sending"


class _Decision:
    def __init__(self, task: Task, started: float):
        self.task = task
        self.started = started
        self.waiting: set = set()
        self.snapshots: Dict[str, StatusSnapshot] = {}
        self.delays: Dict[str, float] = {}
        self.excluded: set = set()
        self.handshake: Optional[Handshake] = None


class PaMdiPolicy:
    def __init__(self, sim: Simulation):
        self.sim = sim
        self.phase = {w: IDLE for w in sim.workers}
        self.decision: Dict[str, Optional[_Decision]] = {w: None for w in sim.workers}
        self.self_includes_task = bool(sim.config.protocol.get("self_backlog_includes_task", False))
        self.open_grants: Dict[str, set] = {w: set() for w in sim.workers}

    # helpers

    def _host(self, source_id: str) -> str:
        return self.sim.workload.source(source_id).host_worker

    def insert(self, w: str, task: Task) -> None:
        self.sim.workers[w].queue.add(task)
        self.kick(w)

    def kick(self, w: str) -> None:
        ws = self.sim.workers[w]
        if self.phase[w] == IDLE and len(ws.queue):
            self.start_decision(w)

    def _admit(self, sid: str, d: int) -> None:
        task = self.sim.admissions.admit_next(sid, d, self.sim.now)
        if task is not None:
            host = self._host(sid)
            self.sim.note_created(task, host)
            self.insert(host, task)

    def _holds_point(self, w: str, sid: str, d: int) -> bool:
        ws = self.sim.workers[w]
        if ws.computing is not None and (ws.computing.source_id, ws.computing.data_index) == (sid, d):
            return True
        dec = self.decision[w]
        if dec is not None and (dec.task.source_id, dec.task.data_index) == (sid, d):
            return True
        return any((t.source_id, t.data_index) == (sid, d) for t in ws.queue)

    # engine hooks

    def start(self) -> None:
        for sid in sorted(self.sim.workload.sources):
            task = self.sim.admissions.start(sid, 0.0)
            host = self._host(sid)
            self.sim.note_created(task, host)
            self.sim.workers[host].queue.add(task)
        for w in sorted(self.sim.workers):
            self.kick(w)

    def start_decision(self, w: str) -> None:
        sim = self.sim
        ws = sim.workers[w]
        task = fetch_next(ws.queue, sim.now)
        ws.queue.remove(task)
        dec = _Decision(task, sim.now)
        self.decision[w] = dec
        nbrs = sim.neighbors(w)
        if not sim.present(w) or not nbrs:
            self.begin_compute(w)
            return
        self.phase[w] = STATUS
        dec.waiting = set(nbrs)
        sim.trace("StatusRefresh", worker=w, task=task.task_id, neighbors=len(nbrs))
        for n in nbrs:
            sim.send_control(StatusRequest(w, n, sim.now, priority=task.priority))
        sim.schedule(sim.now + sim.rtc_timeout(w), self._status_deadline, w, dec)

    def _status_deadline(self, w: str, dec: _Decision) -> None:
        if self.decision[w] is dec and self.phase[w] == STATUS:
            self.finish_status(w)

    def finish_status(self, w: str) -> None:
        sim = self.sim
        dec = self.decision[w]
        ws = sim.workers[w]
        own = ws.backlog(sim.now, dec.task.priority)
        if self.self_includes_task:
            own += dec.task.flops * ws.profile.seconds_per_flop
        dec.snapshots[w] = StatusSnapshot(w, ws.profile.seconds_per_flop, own, sim.now)
        for j in list(dec.snapshots):
            if j == w:
                continue
            try:
                dec.delays[j] = path_delay(sim.topology, w, j, dec.task.input_bytes)
            except NoPathError:
                del dec.snapshots[j]
        self.decide(w)

    def decide(self, w: str) -> None:
        sim = self.sim
        dec = self.decision[w]
        candidates = [j for j in dec.snapshots if j not in dec.excluded]
        if not sim.present(w):
            candidates = [w]
        choice = decide_offload(dec.task, w, candidates, dec.snapshots, dec.delays, sim.now)
        sim.trace("Decision", worker=w, task=dec.task.task_id, chosen=choice.chosen_worker, score=choice.score)
        if choice.chosen_worker == w:
            self.begin_compute(w)
        else:
            self.begin_handshake(w, choice.chosen_worker)

    def begin_handshake(self, w: str, target: str) -> None:
        sim = self.sim
        dec = self.decision[w]
        hs = Handshake(w, target, dec.task, sim.now, sim.now + sim.rtc_timeout(w))
        dec.handshake = hs
        self.phase[w] = HANDSHAKE
        sim.send_control(hs.rtc_message())
        sim.schedule(hs.reply_by, self._handshake_deadline, w, hs)

    def _handshake_deadline(self, w: str, hs: Handshake) -> None:
        dec = self.decision[w]
        if dec is None or dec.handshake is not hs or self.phase[w] != HANDSHAKE:
            return
        if hs.on_deadline(self.sim.now) == proto.TIMEOUT:
            self.sim.trace("Handshake", worker=w, target=hs.target, outcome=proto.TIMEOUT)
            dec.excluded.add(hs.target)
            self.decide(w)

    def on_ctc(self, w: str, msg: CTC) -> None:
        dec = self.decision[w]
        if dec is None or dec.handshake is None or self.phase[w] != HANDSHAKE:
            return
        hs = dec.handshake
        outcome = hs.on_ctc(msg, self.sim.now)
        if outcome is None:
            return
        self.sim.trace("Handshake", worker=w, target=hs.target, outcome=outcome)
        if outcome == proto.GRANTED:
            self.offload(w, hs.target)
        else:
            dec.excluded.add(hs.target)
            self.decide(w)

    def offload(self, w: str, target: str) -> None:
        sim = self.sim
        dec = self.decision[w]
        task = dec.task
        self.decision[w] = None
        self.phase[w] = SENDING
        sim.trace("Offload", worker=w, task=task.task_id, to=target)
        sim.send_data(FeatureTransfer(w, target, sim.now, task=task), holder=w,
                      on_sent=lambda: self._after_offload(w, task))

    def _after_offload(self, w: str, task: Task) -> None:
        sid, d = task.source_id, task.data_index
        if w == self._host(sid) and not self._holds_point(w, sid, d):
            self._admit(sid, d)
        self.phase[w] = IDLE
        self.kick(w)

    def begin_compute(self, w: str) -> None:
        sim = self.sim
        ws = sim.workers[w]
        dec = self.decision[w]
        task = dec.task
        self.decision[w] = None
        self.phase[w] = COMPUTE
        duration = sim.compute_duration(w, task)
        ws.computing = task
        ws.compute_end = sim.now + duration
        sim.trace("ComputeStart", worker=w, task=task.task_id, duration=duration)
        sim.cpus[w].start(0, task, duration, lambda t: self.compute_done(w, t))

    def compute_done(self, w: str, task: Task) -> None:
        sim = self.sim
        ws = sim.workers[w]
        ws.computing = None
        sim.record_task(task, w)
        for action in on_task_done(task, w, sim.workload, sim.now):
            if isinstance(action, EnqueueTask):
                sim.note_created(action.task, w)
                ws.queue.add(action.task)
            elif isinstance(action, RecordResult):
                sim.record_result(action.source_id, action.data_index)
                self._admit(action.source_id, action.data_index)
            elif isinstance(action, SendOutput):
                msg = OutputReturn(w, action.to_worker, sim.now, source_id=action.source_id,
                                   data_index=action.data_index, output_bytes=action.payload_bytes)
                sim.send_data(msg, holder=w)
        self.phase[w] = IDLE
        self.kick(w)

    def _apply(self, w: str, actions: list) -> None:
        sim = self.sim
        for action in actions:
            if isinstance(action, Send):
                sim.send_control(action.message)
            elif isinstance(action, GrantIssued):
                if self.open_grants[w]:
                    sim.violations.append(f"{w} granted {action.to_worker} while holding {self.open_grants[w]}")
                self.open_grants[w].add((action.to_worker, action.serial))
                sim.trace("Grant", worker=w, to=action.to_worker, serial=action.serial)
                sim.schedule(action.expires_at, self._grant_expiry, w, action.serial)
            elif isinstance(action, InsertTask):
                self._close_grant(w, action.from_worker)
                sim.workers[w].queue.add(action.task)
            elif isinstance(action, OutputArrived):
                sim.record_result(action.source_id, action.data_index)
                self._admit(action.source_id, action.data_index)

    def _close_grant(self, w: str, requester: str) -> None:
        self.open_grants[w] = {g for g in self.open_grants[w] if g[0] != requester}

    def _grant_expiry(self, w: str, serial: int) -> None:
        ws = self.sim.workers[w]
        if ws.rtc.granted_to is not None and ws.rtc.grant_serial == serial:
            self.sim.trace("GrantExpired", worker=w, to=ws.rtc.granted_to)
            self.open_grants[w] = {g for g in self.open_grants[w] if g[1] != serial}
        self._apply(w, proto.expire_grant(ws, serial, self.sim.now))

    def on_control(self, w: str, msg: Message) -> None:
        ws = self.sim.workers[w]
        if isinstance(msg, StatusReply):
            dec = self.decision[w]
            if dec is None or self.phase[w] != STATUS or msg.sender not in dec.waiting or msg.sent_at < dec.started:
                return
            dec.waiting.discard(msg.sender)
            dec.snapshots[msg.sender] = StatusSnapshot(msg.sender, msg.seconds_per_flop, msg.backlog_sec, msg.sent_at)
            if not dec.waiting:
                self.finish_status(w)
            return
        if isinstance(msg, CTC):
            self.on_ctc(w, msg)
            return
        self._apply(w, handle_message(ws, msg, self.sim.now))
        self.kick(w)

    def on_data(self, w: str, msg: Message) -> None:
        if isinstance(msg, FeatureTransfer):
            if self.sim.processed[msg.task.task_id] or msg.task in self.sim.workers[w].queue:
                self.sim.violations.append(f"duplicate transfer of {msg.task.task_id}")
        self._apply(w, handle_message(self.sim.workers[w], msg, self.sim.now))
        self.kick(w)

    def on_bounce(self, frm: str, msg: Message) -> None:
        if isinstance(msg, FeatureTransfer):
            self.sim.workers[frm].queue.add(msg.task)
            self.kick(frm)
        else:
            self.sim._forward(msg, frm)

    def on_leave(self, w: str) -> None:
        ws = self.sim.workers[w]
        ws.rtc.pending_rtcs.clear()
        proto.clear_grant(ws)
        self.open_grants[w].clear()
        if self.phase[w] in (STATUS, HANDSHAKE):
            dec = self.decision[w]
            self.decision[w] = None
            ws.queue.add(dec.task)
            self.phase[w] = IDLE
            self.kick(w)

    def on_return(self, w: str) -> None:
        self.kick(w)


# ---------------------------------------------------------------------------
# Ring baselines and Local


class RingPolicy:
    """AR-MDI / MS-MDI over fixed worker chains.

    AR-MDI runs one uncoordinated pipeline per source, so a worker shared by
    two rings time-slices its CPU between them; layer allocation follows the
    measured per-worker speed.  MS-MDI keeps a single FIFO per worker and a
    static uniform allocation.
    """

    def __init__(self, sim: Simulation, variant: str):
        self.sim = sim
        self.variant = variant
        self.adaptive = variant == "AR-MDI"
        self.realloc_every = int(sim.config.protocol.get("ar_realloc_every", 10))
        self.chains = {sid: RingChain(sid, tuple(chain)) for sid, chain in sim.config.ring_chains.items()}
        self.queues: Dict[Tuple[str, object], deque] = {}
        self.busy: Dict[Tuple[str, object], bool] = {}
        self.point_workers: Dict[Tuple[str, int], Tuple[str, ...]] = {}
        self.point_plan: Dict[Tuple[str, int], PartitionPlan] = {}
        self.started: Dict[Tuple, float] = {}
        self.speed: Dict[str, Dict[str, float]] = {
            sid: {w: sim.topology.workers[w].flops_per_second for w in chain.order}
            for sid, chain in self.chains.items()
        }
        self.weights: Dict[str, Dict[str, float]] = {sid: dict(s) for sid, s in self.speed.items()}

    def lane(self, task: Task):
        return task.source_id if self.adaptive else 0

    def _host(self, sid: str) -> str:
        return self.sim.workload.source(sid).host_worker

    def _plan_point(self, sid: str, d: int) -> Tuple[PartitionPlan, Tuple[str, ...]]:
        model = self.sim.workload.model_of(sid)
        workers = tuple(restore_chain(self.chains[sid].order, self.sim.topology.present))
        if self.adaptive:
            if (d - 1) % self.realloc_every == 0:
                self.weights[sid] = dict(self.speed[sid])
            plan = weighted_partition(model, [self.weights[sid][w] for w in workers])
        else:
            plan = uniform_partition(model, len(workers))
        self.point_plan[(sid, d)] = plan
        self.point_workers[(sid, d)] = workers
        return plan, workers

    def _admit(self, sid: str, d: int, first: bool = False) -> None:
        sim = self.sim
        if first:
            task = sim.admissions.start(sid, sim.now)
        else:
            task = sim.admissions.admit_next(sid, d, sim.now)
        if task is None:
            return
        plan, _ = self._plan_point(sid, task.data_index)
        task = sim.workload.make_task(sid, 1, task.data_index, sim.now, plan=plan)
        sim.note_created(task, self._host(sid))
        self.enqueue(self._host(sid), task)

    def target_of(self, task: Task) -> str:
        workers = self.point_workers[(task.source_id, task.data_index)]
        chain = self.chains[task.source_id].order
        return substitute_worker(chain, workers[task.partition_index - 1], self.sim.topology.present)

    def enqueue(self, w: str, task: Task) -> None:
        key = (w, self.lane(task))
        self.queues.setdefault(key, deque()).append(task)
        self.kick(w, self.lane(task))

    def kick(self, w: str, lane) -> None:
        key = (w, lane)
        q = self.queues.get(key)
        if self.busy.get(key) or not q:
            return
        task = q.popleft()
        self.busy[key] = True
        self.started[(w, task.task_id)] = self.sim.now
        duration = self.sim.compute_duration(w, task)
        self.sim.trace("ComputeStart", worker=w, task=task.task_id, duration=duration)
        self.sim.cpus[w].start(lane, task, duration, lambda t: self.compute_done(w, lane, t))

    def compute_done(self, w: str, lane, task: Task) -> None:
        sim = self.sim
        sim.record_task(task, w)
        sid, d = task.source_id, task.data_index
        if self.adaptive:
            elapsed = sim.now - self.started.pop((w, task.task_id))
            if elapsed > 0:
                old = self.speed[sid].get(w, task.flops / elapsed)
                self.speed[sid][w] = 0.5 * old + 0.5 * task.flops / elapsed
        else:
            self.started.pop((w, task.task_id), None)
        host = self._host(sid)
        if task.is_last:
            if w == host:
                sim.record_result(sid, d)
                self._admit(sid, d)
            else:
                sim.send_data(OutputReturn(w, host, sim.now, source_id=sid, data_index=d,
                                           output_bytes=task.output_bytes), holder=w)
            self._free(w, lane)
            return
        nxt = sim.workload.make_task(sid, task.partition_index + 1, d, sim.now, plan=self.point_plan[(sid, d)])
        sim.note_created(nxt, w)
        target = self.target_of(nxt)
        if target == w:
            self.enqueue(w, nxt)
            self._free(w, lane)
            return
        sim.trace("Offload", worker=w, task=nxt.task_id, to=target)
        sim.send_data(FeatureTransfer(w, target, sim.now, task=nxt), holder=w,
                      on_sent=lambda: self._after_send(w, lane, nxt))

    def _after_send(self, w: str, lane, task: Task) -> None:
        sid, d = task.source_id, task.data_index
        if w == self._host(sid) and not self._holds_point(w, sid, d):
            self._admit(sid, d)
        self._free(w, lane)

    def _holds_point(self, w, sid, d) -> bool:
        for (worker, _), q in self.queues.items():
            if worker == w and any((t.source_id, t.data_index) == (sid, d) for t in q):
                return True
        return False

    def _free(self, w: str, lane) -> None:
        self.busy[(w, lane)] = False
        self.kick(w, lane)

    def start(self) -> None:
        for sid in sorted(self.sim.workload.sources):
            self._admit(sid, 0, first=True)

    def on_control(self, w, msg) -> None:
        pass

    def on_data(self, w: str, msg: Message) -> None:
        if isinstance(msg, FeatureTransfer):
            self.enqueue(w, msg.task)
        elif isinstance(msg, OutputReturn):
            self.sim.record_result(msg.source_id, msg.data_index)
            self._admit(msg.source_id, msg.data_index)

    def on_bounce(self, frm: str, msg: Message) -> None:
        if isinstance(msg, FeatureTransfer):
            target = self.target_of(msg.task)
            if target == frm:
                self.enqueue(frm, msg.task)
            else:
                self.sim._forward(FeatureTransfer(msg.sender, target, msg.sent_at, task=msg.task), frm)
        else:
            self.sim._forward(msg, frm)

    def on_leave(self, w: str) -> None:
        self.sim.trace("Bypass", worker=w)

    def on_return(self, w: str) -> None:
        pass


class LocalPolicy:
    def __init__(self, sim: Simulation):
        self.sim = sim
        self.queues: Dict[str, deque] = {w: deque() for w in sim.workers}
        self.busy = {w: False for w in sim.workers}

    def _enqueue(self, w: str, task: Task) -> None:
        self.queues[w].append(task)
        self.kick(w)

    def kick(self, w: str) -> None:
        if self.busy[w] or not self.queues[w]:
            return
        task = self.queues[w].popleft()
        self.busy[w] = True
        duration = self.sim.compute_duration(w, task)
        self.sim.trace("ComputeStart", worker=w, task=task.task_id, duration=duration)
        self.sim.cpus[w].start(0, task, duration, lambda t: self.compute_done(w, t))

    def compute_done(self, w: str, task: Task) -> None:
        sim = self.sim
        sim.record_task(task, w)
        self.busy[w] = False
        if task.is_last:
            sim.record_result(task.source_id, task.data_index)
            nxt = sim.admissions.admit_next(task.source_id, task.data_index, sim.now)
        else:
            nxt = sim.workload.make_task(task.source_id, task.partition_index + 1, task.data_index, sim.now)
        if nxt is not None:
            sim.note_created(nxt, w)
            self._enqueue(w, nxt)
        self.kick(w)

    def start(self) -> None:
        for sid in sorted(self.sim.workload.sources):
            task = self.sim.admissions.start(sid, 0.0)
            host = self.sim.workload.source(sid).host_worker
            self.sim.note_created(task, host)
            self._enqueue(host, task)

    def on_control(self, w, msg) -> None:
        pass

    def on_data(self, w, msg) -> None:
        pass

    def on_bounce(self, frm, msg) -> None:
        pass

    def on_leave(self, w) -> None:
        pass

    def on_return(self, w) -> None:
        pass


def run(config: ScenarioConfig) -> SimulationTrace:
    return Simulation(config).run()
