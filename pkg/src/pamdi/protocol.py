"""Wire messages and the per-worker message handler, including the RTC/CTC handshake.

A worker that wants to hand a task to a neighbor sends a request-to-compute
(RTC).  The neighbor, if its CPU is idle and it has no grant outstanding,
broadcasts a clear-to-compute (CTC) naming exactly one requester; every other
requester hearing that CTC treats it as a denial.  A requester that hears
nothing before its deadline gives up on that neighbor (busy or departed).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from .costs import CONTROL_MESSAGE_BYTES, backlog
from .model import Task, TaskId, WorkerProfile
from .scheduler import TaskQueue

log = logging.getLogger(__name__)

BROADCAST = "*"


@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    sent_at: float

    kind = "Message"
    control = True

    @property
    def payload_bytes(self) -> float:
        return CONTROL_MESSAGE_BYTES


@dataclass(frozen=True)
class StatusRequest(Message):
    priority: Optional[float] = None
    kind = "StatusRequest"


@dataclass(frozen=True)
class StatusReply(Message):
    seconds_per_flop: float = 0.0
    backlog_sec: float = 0.0
    kind = "StatusReply"


@dataclass(frozen=True)
class RTC(Message):
    task_id: TaskId = ("", 0, 0)
    flops: float = 0.0
    transfer_bytes: float = 0.0
    reply_by: float = 0.0
    kind = "RTC"


@dataclass(frozen=True)
class CTC(Message):
    granted_worker: str = ""
    flops: float = 0.0
    kind = "CTC"


@dataclass(frozen=True)
class FeatureTransfer(Message):
    task: Optional[Task] = None
    kind = "FeatureTransfer"
    control = False

    @property
    def payload_bytes(self) -> float:
        return self.task.input_bytes


@dataclass(frozen=True)
class OutputReturn(Message):
    source_id: str = ""
    data_index: int = 0
    output_bytes: float = 0.0
    kind = "OutputReturn"
    control = False

    @property
    def payload_bytes(self) -> float:
        return self.output_bytes


class ProtocolError(Exception):
    pass


@dataclass
class RtcState:
    pending_rtcs: List[Tuple[float, str, RTC]] = field(default_factory=list)
    granted_to: Optional[str] = None
    grant_expires_at: Optional[float] = None
    grant_serial: int = 0
    last_ctc_at: Optional[float] = None


class WorkerState:
    """Mutable per-worker state used by the engine and by :func:`handle_message`.

    ``env`` supplies what the worker can observe about the network:
    ``neighbors(worker_id)`` and ``control_delay(a, b)`` /
    ``data_delay(a, b, nbytes)`` for one-hop transfers.
    """

    def __init__(self, profile: WorkerProfile, env=None, priority_backlog: bool = False):
        self.profile = profile
        self.env = env
        self.priority_backlog = priority_backlog
        self.queue = TaskQueue()
        self.computing: Optional[Task] = None
        self.compute_end: float = 0.0
        self.rtc = RtcState()
        self.present = True

    @property
    def worker_id(self) -> str:
        return self.profile.worker_id

    @property
    def idle(self) -> bool:
        return self.computing is None

    def in_flight_remaining(self, now: float) -> float:
        return max(self.compute_end - now, 0.0) if self.computing is not None else 0.0

    def backlog(self, now: float, min_priority: Optional[float] = None) -> float:
        if not self.priority_backlog:
            min_priority = None
        return backlog(self.queue, self.profile.seconds_per_flop, self.in_flight_remaining(now), min_priority)


# Actions returned by handle_message; the engine carries them out.

@dataclass(frozen=True)
class Send:
    message: Message


@dataclass(frozen=True)
class InsertTask:
    task: Task
    from_worker: str


@dataclass(frozen=True)
class OutputArrived:
    source_id: str
    data_index: int


@dataclass(frozen=True)
class GrantIssued:
    to_worker: str
    serial: int
    expires_at: float


def handle_message(worker: WorkerState, msg: Message, now: float) -> list:
    if isinstance(msg, FeatureTransfer):
        actions = [InsertTask(msg.task, msg.sender)]
        if worker.rtc.granted_to == msg.sender:
            clear_grant(worker)
            actions.extend(try_grant(worker, now))
        return actions
    if isinstance(msg, StatusRequest):
        reply = StatusReply(worker.worker_id, msg.sender, now,
                            seconds_per_flop=worker.profile.seconds_per_flop,
                            backlog_sec=worker.backlog(now, msg.priority))
        return [Send(reply)]
    if isinstance(msg, RTC):
        return on_rtc(worker, msg, now)
    if isinstance(msg, OutputReturn):
        return [OutputArrived(msg.source_id, msg.data_index)]
    if isinstance(msg, (StatusReply, CTC)):
        # consumed by the requester-side logic, not by this handler
        return []
    raise ProtocolError(f"unknown message kind {type(msg).__name__}")


def on_rtc(worker: WorkerState, msg: RTC, now: float) -> list:
    rtc = worker.rtc
    if not worker.idle:
        # busy at receipt: no CTC; the requester times out
        return []
    if rtc.granted_to is not None:
        ow = worker.env.control_delay(worker.worker_id, msg.sender)
        if rtc.last_ctc_at is not None and msg.sent_at < rtc.last_ctc_at + ow:
            # the requester hears our last CTC while waiting, which denies it
            return []
        rtc.pending_rtcs.append((now, msg.sender, msg))
        rtc.pending_rtcs.sort(key=lambda e: (e[0], e[1]))
        return []
    rtc.pending_rtcs.append((now, msg.sender, msg))
    rtc.pending_rtcs.sort(key=lambda e: (e[0], e[1]))
    return try_grant(worker, now)


def clear_grant(worker: WorkerState) -> None:
    worker.rtc.granted_to = None
    worker.rtc.grant_expires_at = None


def try_grant(worker: WorkerState, now: float) -> list:
    """Grant the oldest still-answerable pending RTC, broadcasting the CTC."""
    rtc = worker.rtc
    if rtc.granted_to is not None or not worker.idle or not worker.present:
        return []
    env = worker.env
    nbrs = set(env.neighbors(worker.worker_id))
    chosen = None
    while rtc.pending_rtcs:
        _, sender, req = rtc.pending_rtcs.pop(0)
        if sender in nbrs and now + env.control_delay(worker.worker_id, sender) <= req.reply_by:
            chosen = req
            break
    if chosen is None:
        return []
    rtc.pending_rtcs.clear()
    rtc.granted_to = chosen.sender
    rtc.grant_serial += 1
    rtc.last_ctc_at = now
    window = chosen.reply_by - chosen.sent_at
    rtc.grant_expires_at = (now + env.control_delay(worker.worker_id, chosen.sender)
                            + 2 * env.data_delay(worker.worker_id, chosen.sender, chosen.transfer_bytes)
                            + window)
    actions: list = [GrantIssued(chosen.sender, rtc.grant_serial, rtc.grant_expires_at)]
    for n in sorted(nbrs):
        actions.append(Send(CTC(worker.worker_id, n, now, granted_worker=chosen.sender, flops=chosen.flops)))
    return actions


def expire_grant(worker: WorkerState, serial: int, now: float) -> list:
    rtc = worker.rtc
    if rtc.granted_to is None or rtc.grant_serial != serial:
        return []
    log.debug("%s: grant to %s expired at %.6f", worker.worker_id, rtc.granted_to, now)
    clear_grant(worker)
    return try_grant(worker, now)


GRANTED = "granted"
DENIED = "denied"
TIMEOUT = "timeout"


@dataclass
class Handshake:
    """Requester side of one RTC round."""

    requester: str
    target: str
    task: Task
    started_at: float
    reply_by: float
    outcome: Optional[str] = None

    def rtc_message(self) -> RTC:
        return RTC(self.requester, self.target, self.started_at, task_id=self.task.task_id,
                   flops=self.task.flops, transfer_bytes=self.task.input_bytes, reply_by=self.reply_by)

    def on_ctc(self, msg: CTC, now: float) -> Optional[str]:
        if self.outcome is not None or msg.sender != self.target or now > self.reply_by:
            return None
        self.outcome = GRANTED if msg.granted_worker == self.requester else DENIED
        return self.outcome

    def on_deadline(self, now: float) -> Optional[str]:
        if self.outcome is None:
            self.outcome = TIMEOUT
            return TIMEOUT
        return None
