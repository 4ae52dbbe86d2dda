"""Brute-force optimisation oracle for small instances.

Everything here is computed exactly with :class:`fractions.Fraction` and
uses its own exhaustive path enumeration, so it shares no arithmetic with
the online scheduler it is used to check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .model import Workload
from .topology import Topology

BETA_GRID = (0.01, 0.1, 1.0, 10.0)
DEFAULT_CAP = 10 ** 6

TaskKey = Tuple[str, int, int]  # (source, data index, partition index)


class CapExceededError(ValueError):
    pass


@dataclass(frozen=True)
class OracleInstance:
    topology: Topology
    workload: Workload

    def task_keys(self) -> List[TaskKey]:
        keys = []
        for sid in sorted(self.workload.sources):
            src = self.workload.sources[sid]
            k_total = self.workload.plan_of(sid).num_partitions
            for d in range(1, src.num_data_points + 1):
                for k in range(1, k_total + 1):
                    keys.append((sid, d, k))
        return keys

    def points(self) -> List[Tuple[str, int]]:
        return sorted({(m, d) for m, d, _ in self.task_keys()})

    def workers(self) -> List[str]:
        return sorted(self.topology.present)


@dataclass(frozen=True)
class PolicyAssignment:
    mapping: Mapping[TaskKey, str]

    def __getitem__(self, key: TaskKey) -> str:
        return self.mapping[key]

    def violations(self, instance: OracleInstance) -> List[str]:
        out = []
        workers = set(instance.topology.workers)
        for key in instance.task_keys():
            if key not in self.mapping:
                out.append(f"task {key} unassigned")
            elif self.mapping[key] not in workers:
                out.append(f"task {key} assigned to unknown worker {self.mapping[key]}")
        return out


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def enumerate_path_delay(topology: Topology, src: str, dst: str, nbytes: float) -> Optional[Fraction]:
    """Minimum summed per-hop delay over every simple path; None when unreachable."""
    if src == dst:
        return Fraction(0)
    if not (topology.is_present(src) and topology.is_present(dst)):
        return None
    size = _q(nbytes)
    best: Optional[Fraction] = None
    stack = [(src, (src,), Fraction(0))]
    while stack:
        node, seen, acc = stack.pop()
        for nxt in topology.neighbors(node):
            if nxt in seen:
                continue
            link = topology.link(node, nxt)
            cost = acc + size / _q(link.bandwidth_bytes_per_sec) + _q(link.propagation_delay_sec)
            if nxt == dst:
                if best is None or cost < best:
                    best = cost
            else:
                stack.append((nxt, seen + (nxt,), cost))
    return best


class _RhoTable:
    """Exact rho(prev -> worker) for each task, cached."""

    def __init__(self, instance: OracleInstance):
        self.instance = instance
        self._paths: Dict[Tuple[str, str, Fraction], Optional[Fraction]] = {}
        self._task: Dict[TaskKey, Tuple[Fraction, Fraction]] = {}

    def _task_sizes(self, key: TaskKey) -> Tuple[Fraction, Fraction]:
        if key not in self._task:
            m, d, k = key
            task = self.instance.workload.make_task(m, k, d, 0.0)
            self._task[key] = (_q(task.flops), _q(task.input_bytes))
        return self._task[key]

    def path(self, a: str, b: str, nbytes: Fraction) -> Optional[Fraction]:
        ck = (a, b, nbytes)
        if ck not in self._paths:
            self._paths[ck] = enumerate_path_delay(self.instance.topology, a, b, nbytes)
        return self._paths[ck]

    def rho(self, key: TaskKey, prev: str, worker: str) -> Optional[Fraction]:
        flops, nbytes = self._task_sizes(key)
        comm = self.path(prev, worker, nbytes)
        if comm is None:
            return None
        spf = _q(self.instance.topology.workers[worker].seconds_per_flop)
        return comm + flops * spf


def _host(instance: OracleInstance, m: str) -> str:
    return instance.workload.source(m).host_worker


def _point_terms(instance: OracleInstance, table: _RhoTable, m: str, d: int, workers: Sequence[str],
                 failure_probs: Mapping) -> Tuple[Optional[Fraction], Fraction]:
    """(sum of rho, gamma * alpha * success probability) for one data point's worker sequence."""
    src = instance.workload.source(m)
    prev = _host(instance, m)
    total = Fraction(0)
    success = Fraction(1)
    for k, w in enumerate(workers, start=1):
        r = table.rho((m, d, k), prev, w)
        if r is None:
            return None, Fraction(0)
        total += r
        success *= 1 - _q(_failure(failure_probs, (m, d, k), w))
        prev = w
    return total, _q(src.priority_weight) * _q(src.accuracy_gain) * success


def _failure(failure_probs: Optional[Mapping], key: TaskKey, worker: str) -> float:
    if not failure_probs:
        return 0.0
    if (key, worker) in failure_probs:
        return failure_probs[(key, worker)]
    return failure_probs.get(worker, 0.0)


def objective(assignment: PolicyAssignment, instance: OracleInstance,
              failure_probs: Optional[Mapping] = None, beta: float = 1.0,
              _table: Optional[_RhoTable] = None, _memo: Optional[dict] = None) -> Fraction:
    """J = sum gamma*alpha*prod(1-P) - beta * sum rho, computed exactly.

    Raises ValueError if the assignment needs a worker its predecessor cannot reach.
    """
    table = _table or _RhoTable(instance)
    k_of = {m: instance.workload.plan_of(m).num_partitions for m in instance.workload.sources}
    acc = Fraction(0)
    delay = Fraction(0)
    for m, d in instance.points():
        seq = tuple(assignment[(m, d, k)] for k in range(1, k_of[m] + 1))
        if _memo is None:
            total, gain = _point_terms(instance, table, m, d, seq, failure_probs or {})
        else:
            if (m, d, seq) not in _memo:
                _memo[(m, d, seq)] = _point_terms(instance, table, m, d, seq, failure_probs or {})
            total, gain = _memo[(m, d, seq)]
        if total is None:
            raise ValueError(f"assignment for {(m, d)} uses an unreachable worker")
        acc += gain
        delay += total
    return acc - _q(beta) * delay


@dataclass
class OracleResult:
    best: PolicyAssignment
    value: Fraction
    evaluated: int
    point_optima: Dict[Tuple[str, int], Tuple[Tuple[str, ...], Fraction]] = field(default_factory=dict)
    ratio_minimizers: Dict[Tuple[str, int], Tuple[Tuple[str, ...], Fraction]] = field(default_factory=dict)

    def joined(self) -> PolicyAssignment:
        """The per-data-point optima stitched into one assignment."""
        mapping = {}
        for (m, d), (seq, _) in self.point_optima.items():
            for k, w in enumerate(seq, start=1):
                mapping[(m, d, k)] = w
        return PolicyAssignment(mapping)


def brute_force_optimal(instance: OracleInstance, beta: float, failure_probs: Optional[Mapping] = None,
                        cap: int = DEFAULT_CAP) -> OracleResult:
    """Exhaustive argmax of J over every total assignment (first in enumeration order on ties)."""
    workers = instance.workers()
    keys = instance.task_keys()
    space = len(workers) ** len(keys)
    if space > cap:
        raise CapExceededError(f"{len(workers)}^{len(keys)} = {space} assignments exceeds cap {cap}")
    failure_probs = failure_probs or {}
    table = _RhoTable(instance)
    memo: dict = {}
    b = _q(beta)

    best_value = None
    best_combo = None
    evaluated = 0
    for combo in itertools.product(workers, repeat=len(keys)):
        mapping = dict(zip(keys, combo))
        try:
            value = objective(PolicyAssignment(mapping), instance, failure_probs, b, _table=table, _memo=memo)
        except ValueError:
            continue
        evaluated += 1
        if best_value is None or value > best_value:
            best_value, best_combo = value, mapping
    if best_combo is None:
        raise ValueError("no feasible assignment")

    result = OracleResult(PolicyAssignment(best_combo), best_value, evaluated)
    for m, d in instance.points():
        k_total = instance.workload.plan_of(m).num_partitions
        best_j = best_r = None
        for seq in itertools.product(workers, repeat=k_total):
            total, gain = _point_terms(instance, table, m, d, seq, failure_probs)
            if total is None:
                continue
            j = gain - b * total
            if best_j is None or j > best_j[1]:
                best_j = (tuple(seq), j)
            if gain > 0:
                r = total / gain
                if best_r is None or r < best_r[1]:
                    best_r = (tuple(seq), r)
        result.point_optima[(m, d)] = best_j
        if best_r is not None:
            result.ratio_minimizers[(m, d)] = best_r
    return result


def per_task_minimizer(instance: OracleInstance, key: TaskKey, at_worker: str, candidates: Iterable[str],
                       backlog: Optional[Mapping[str, float]] = None, age: float = 0.0) -> Tuple[str, Fraction]:
    """Worker minimising (rho + age + backlog) / (gamma * alpha) for one task held at ``at_worker``.

    Ties go to the lowest worker id.
    """
    table = _RhoTable(instance)
    src = instance.workload.source(key[0])
    weight = _q(src.priority_weight) * _q(src.accuracy_gain)
    best = None
    for w in sorted(set(candidates)):
        r = table.rho(key, at_worker, w)
        if r is None:
            continue
        score = (r + _q(age) + _q((backlog or {}).get(w, 0.0))) / weight
        if best is None or score < best[1]:
            best = (w, score)
    if best is None:
        raise ValueError("no reachable candidate")
    return best
