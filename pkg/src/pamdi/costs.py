"""Delay quantities: compute time, worker backlog, link and multi-hop transfer time."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from .model import Task, WorkerProfile

CONTROL_MESSAGE_BYTES = 1000.0


class NoPathError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinkSpec:
    endpoints: Tuple[str, str]
    bandwidth_bytes_per_sec: float
    propagation_delay_sec: float = 0.0

    def __post_init__(self):
        a, b = self.endpoints
        # canonical (sorted) endpoint order so that links compare as unordered pairs
        object.__setattr__(self, "endpoints", (a, b) if a <= b else (b, a))

    def other(self, worker: str) -> str:
        a, b = self.endpoints
        return b if worker == a else a

    def violations(self) -> List[str]:
        out = []
        a, b = self.endpoints
        if a == b:
            out.append(f"link {a}-{b}: self-link")
        if not self.bandwidth_bytes_per_sec > 0:
            out.append(f"link {a}-{b}: bandwidth must be > 0")
        if self.propagation_delay_sec < 0:
            out.append(f"link {a}-{b}: propagation delay must be >= 0")
        return out


@dataclass(frozen=True)
class StatusSnapshot:
    worker_id: str
    seconds_per_flop: float
    backlog_sec: float
    taken_at: float


def compute_delay(task: Task, profile: WorkerProfile) -> float:
    return task.flops * profile.seconds_per_flop


def backlog(queued: Iterable[Task], seconds_per_flop: float, in_flight_remaining: float = 0.0,
            min_priority: Optional[float] = None) -> float:
    """Seconds of work already assigned: the in-flight remainder plus queued compute.

    With ``min_priority`` only queued tasks of at least that priority count,
    i.e. the work that would run before a newly arriving task of that
    priority.
    """
    total = max(in_flight_remaining, 0.0)
    for task in queued:
        if min_priority is None or task.priority >= min_priority:
            total += task.flops * seconds_per_flop
    return total


def transfer_delay(nbytes: float, link: LinkSpec) -> float:
    if nbytes < 0:
        raise ValueError("payload size must be >= 0")
    return link.propagation_delay_sec + nbytes / link.bandwidth_bytes_per_sec


def shortest_path(topology, src: str, dst: str, nbytes: float) -> Tuple[float, List[str]]:
    """Dijkstra over currently present workers, weighting each hop by its transfer delay."""
    if src == dst:
        return 0.0, [src]
    if not topology.is_present(src) or not topology.is_present(dst):
        raise NoPathError(f"{src} -> {dst}: endpoint not present")
    best = {src: 0.0}
    prev = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        dist, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == dst:
            break
        for nbr in topology.neighbors(node):
            if nbr in done:
                continue
            cand = dist + transfer_delay(nbytes, topology.link(node, nbr))
            # ties resolved toward the lexicographically smaller predecessor for determinism
            if nbr not in best or cand < best[nbr] or (cand == best[nbr] and node < prev[nbr]):
                best[nbr] = cand
                prev[nbr] = node
                heapq.heappush(heap, (cand, nbr))
    if dst not in done:
        raise NoPathError(f"no path from {src} to {dst}")
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return best[dst], path


def path_delay(topology, src: str, dst: str, nbytes: float) -> float:
    return shortest_path(topology, src, dst, nbytes)[0]
