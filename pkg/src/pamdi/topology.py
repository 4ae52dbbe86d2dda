"""Worker graph with presence tracking, and the Poisson departure/return process."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from .costs import LinkSpec
from .model import WorkerProfile


class Topology:
    """Undirected graph of workers; only present workers are observable."""

    def __init__(self, workers: Iterable[WorkerProfile], links: Iterable[LinkSpec]):
        self.workers: Dict[str, WorkerProfile] = {w.worker_id: w for w in workers}
        self.links: Dict[Tuple[str, str], LinkSpec] = {}
        self._adj: Dict[str, List[str]] = {w: [] for w in self.workers}
        for link in links:
            a, b = link.endpoints
            self.links[(a, b)] = link
            if a in self._adj and b in self._adj and a != b:
                self._adj[a].append(b)
                self._adj[b].append(a)
        for nbrs in self._adj.values():
            nbrs.sort()
        self.present: Set[str] = set(self.workers)

    def copy(self) -> "Topology":
        topo = Topology(self.workers.values(), self.links.values())
        topo.present = set(self.present)
        return topo

    def worker_ids(self) -> List[str]:
        return sorted(self.workers)

    def is_present(self, worker: str) -> bool:
        return worker in self.present

    def link(self, a: str, b: str) -> LinkSpec:
        return self.links[(a, b) if a <= b else (b, a)]

    def has_link(self, a: str, b: str) -> bool:
        return ((a, b) if a <= b else (b, a)) in self.links

    def configured_neighbors(self, worker: str) -> List[str]:
        return list(self._adj[worker])

    def neighbors(self, worker: str) -> List[str]:
        """Present one-hop neighbors, sorted; empty when ``worker`` itself is away."""
        if worker not in self.present:
            return []
        return [n for n in self._adj[worker] if n in self.present]

    def violations(self) -> List[str]:
        out = []
        for (a, b), link in self.links.items():
            out.extend(link.violations())
            for end in (a, b):
                if end not in self.workers:
                    out.append(f"link {a}-{b}: unknown worker {end}")
        for w in self.workers.values():
            out.extend(w.violations())
        return out


@dataclass
class ChurnProcess:
    mobile_workers: Tuple[str, ...]
    mean_interval_sec: float
    rng_seed: int = 0

    def violations(self, topology: Topology) -> List[str]:
        out = []
        if not self.mean_interval_sec > 0:
            out.append("churn: mean_interval_sec must be > 0")
        for w in self.mobile_workers:
            profile = topology.workers.get(w)
            if profile is None:
                out.append(f"churn: unknown worker {w}")
            elif profile.is_source_host:
                out.append(f"churn: source host {w} cannot be mobile")
            elif not profile.mobile:
                out.append(f"churn: worker {w} is not flagged mobile")
        return out

    def schedule(self, horizon: float) -> List[Tuple[float, str, str]]:
        """All (time, worker, "leave"|"return") events before ``horizon``.

        Each mobile worker alternates leave/return with i.i.d. exponential gaps,
        starting present at time 0.
        """
        events = []
        for idx, worker in enumerate(sorted(self.mobile_workers)):
            rng = np.random.default_rng([self.rng_seed, idx])
            t = 0.0
            leaving = True
            while True:
                t += float(rng.exponential(self.mean_interval_sec))
                if t >= horizon:
                    break
                events.append((t, worker, "leave" if leaving else "return"))
                leaving = not leaving
        events.sort()
        return events

    def intervals(self, horizon: float) -> List[float]:
        """Gaps between consecutive events of each worker, pooled."""
        gaps = []
        last: Dict[str, float] = {}
        for t, worker, _ in self.schedule(horizon):
            gaps.append(t - last.get(worker, 0.0))
            last[worker] = t
        return gaps
