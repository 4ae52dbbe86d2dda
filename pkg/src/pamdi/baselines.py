"""Ring-chain helpers for the AR-MDI and MS-MDI baselines.

A ring chain is the fixed order in which a source's partitions visit workers,
starting at the source host.  When a worker departs it is bypassed at once:
its successor takes over its partitions, and on return it resumes its old
position.  The scheduling itself lives in :mod:`pamdi.engine`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Set, Tuple

BASELINES = ("AR-MDI", "MS-MDI", "Local")


@dataclass(frozen=True)
class RingChain:
    source_id: str
    order: Tuple[str, ...]

    @property
    def host(self) -> str:
        return self.order[0]

    def successor(self, worker: str) -> str:
        i = self.order.index(worker)
        return self.order[(i + 1) % len(self.order)]


def baseline_bypass(chain: Sequence[str], departed: str) -> List[str]:
    """The chain with ``departed`` removed; its predecessor now links to its successor."""
    if departed == chain[0]:
        raise ValueError("the source host cannot leave its own chain")
    return [w for w in chain if w != departed]


def restore_chain(original: Sequence[str], present: Iterable[str]) -> List[str]:
    """Present members of ``original`` in their original order."""
    here: Set[str] = set(present)
    return [w for w in original if w in here]


def substitute_worker(original: Sequence[str], worker: str, present: Iterable[str]) -> str:
    """``worker`` if present, otherwise the next present worker after it along the ring."""
    here = set(present)
    if worker in here:
        return worker
    i = list(original).index(worker)
    n = len(original)
    for step in range(1, n + 1):
        cand = original[(i + step) % n]
        if cand in here:
            return cand
    raise ValueError(f"no present worker in chain {list(original)}")
