"""Domain types shared by the simulator, the scheduler and the oracle.

Everything here is an immutable value type.  Models are described layer by
layer (FLOPs and output feature size), a :class:`PartitionPlan` cuts a model
into contiguous tasks, and a :class:`Task` is one partition applied to one
data point.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

DATA_DIR = Path(__file__).parent / "data" / "models"


@dataclass(frozen=True)
class LayerSpec:
    layer_index: int
    flops: float
    output_bytes: float


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    layers: Tuple[LayerSpec, ...]
    input_size_bytes: float
    output_size_bytes: float

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def total_flops(self) -> float:
        return sum(layer.flops for layer in self.layers)

    def layer(self, index: int) -> LayerSpec:
        return self.layers[index - 1]

    def violations(self) -> List[str]:
        out = []
        if not self.layers:
            out.append(f"model {self.model_id}: no layers")
        for pos, layer in enumerate(self.layers, start=1):
            if layer.layer_index != pos:
                out.append(f"model {self.model_id}: layer index {layer.layer_index} at position {pos}")
            if not layer.flops > 0:
                out.append(f"model {self.model_id}: layer {layer.layer_index} flops must be > 0")
            if not layer.output_bytes > 0:
                out.append(f"model {self.model_id}: layer {layer.layer_index} output_bytes must be > 0")
        if self.input_size_bytes < 0 or self.output_size_bytes < 0:
            out.append(f"model {self.model_id}: negative input/output size")
        return out

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "input_size_bytes": self.input_size_bytes,
            "output_size_bytes": self.output_size_bytes,
            "layers": [[l.flops, l.output_bytes] for l in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        layers = tuple(
            LayerSpec(i, float(flops), float(out))
            for i, (flops, out) in enumerate(data["layers"], start=1)
        )
        return cls(
            model_id=str(data["model_id"]),
            layers=layers,
            input_size_bytes=float(data["input_size_bytes"]),
            output_size_bytes=float(data["output_size_bytes"]),
        )


def uniform_model(model_id: str, num_layers: int, flops_per_layer: float,
                  bytes_per_layer: float, input_bytes: Optional[float] = None,
                  output_bytes: Optional[float] = None) -> ModelSpec:
    layers = tuple(LayerSpec(i, flops_per_layer, bytes_per_layer) for i in range(1, num_layers + 1))
    return ModelSpec(
        model_id=model_id,
        layers=layers,
        input_size_bytes=bytes_per_layer if input_bytes is None else input_bytes,
        output_size_bytes=bytes_per_layer if output_bytes is None else output_bytes,
    )


_BUILTIN_CACHE: Dict[str, ModelSpec] = {}


def builtin_models() -> List[str]:
    return sorted(p.stem for p in DATA_DIR.glob("*.json"))


def load_builtin_model(name: str) -> ModelSpec:
    """Load one of the shipped model descriptions (see ``pamdi.flops``)."""
    if name not in _BUILTIN_CACHE:
        path = DATA_DIR / f"{name}.json"
        if not path.exists():
            raise KeyError(f"unknown built-in model {name!r}; available: {builtin_models()}")
        _BUILTIN_CACHE[name] = ModelSpec.from_dict(json.loads(path.read_text()))
    return _BUILTIN_CACHE[name]


@dataclass(frozen=True)
class PartitionPlan:
    model_id: str
    cuts: Tuple[Tuple[int, int], ...]

    @property
    def num_partitions(self) -> int:
        return len(self.cuts)

    def layer_range(self, k: int) -> range:
        if not 1 <= k <= len(self.cuts):
            raise IndexError(f"partition index {k} outside 1..{len(self.cuts)}")
        begin, end = self.cuts[k - 1]
        return range(begin, end + 1)

    def violations(self, model: ModelSpec) -> List[str]:
        out = []
        if not self.cuts:
            return [f"plan for {self.model_id}: needs at least one cut"]
        expected = 1
        for k, (begin, end) in enumerate(self.cuts, start=1):
            if begin < expected:
                out.append(f"plan for {self.model_id}: cut {k} ({begin},{end}) overlaps previous cut")
            elif begin > expected:
                out.append(f"plan for {self.model_id}: gap before cut {k} ({begin},{end})")
            if end < begin:
                out.append(f"plan for {self.model_id}: cut {k} ({begin},{end}) is empty")
            expected = end + 1
        if expected - 1 != model.num_layers:
            out.append(
                f"plan for {self.model_id}: cuts end at layer {expected - 1}, model has {model.num_layers}"
            )
        return out


def uniform_partition(model: ModelSpec, k: int) -> PartitionPlan:
    """Split into ``k`` contiguous parts whose sizes differ by at most one.

    Earlier parts take the extra layer, so 23 layers in two parts is 12 + 11.
    """
    n = model.num_layers
    if not 1 <= k <= n:
        raise ValueError(f"cannot split {n} layers into {k} parts")
    base, extra = divmod(n, k)
    cuts = []
    begin = 1
    for i in range(k):
        size = base + (1 if i < extra else 0)
        cuts.append((begin, begin + size - 1))
        begin += size
    return PartitionPlan(model.model_id, tuple(cuts))


def weighted_partition(model: ModelSpec, weights: Sequence[float]) -> PartitionPlan:
    """Contiguous split where part ``i`` gets FLOPs roughly proportional to ``weights[i]``.

    Every part receives at least one layer, so ``len(weights)`` may not exceed
    the layer count.
    """
    k = len(weights)
    n = model.num_layers
    if not 1 <= k <= n:
        raise ValueError(f"cannot split {n} layers into {k} parts")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    total = model.total_flops
    wsum = float(sum(weights))
    cuts = []
    begin = 1
    acc = 0.0
    target = 0.0
    for i in range(k):
        target += total * weights[i] / wsum
        remaining_parts = k - i - 1
        end = begin
        acc += model.layer(end).flops
        # extend while it brings the cumulative sum closer to the target
        while end < n - remaining_parts:
            nxt = model.layer(end + 1).flops
            if abs(acc + nxt - target) < abs(acc - target):
                end += 1
                acc += nxt
            else:
                break
        if i == k - 1:
            for l in range(end + 1, n + 1):
                acc += model.layer(l).flops
            end = n
        cuts.append((begin, end))
        begin = end + 1
    return PartitionPlan(model.model_id, tuple(cuts))


def task_flops(plan: PartitionPlan, model: ModelSpec, k: int) -> float:
    return sum(model.layer(l).flops for l in plan.layer_range(k))


def task_input_bytes(plan: PartitionPlan, model: ModelSpec, k: int) -> float:
    begin = plan.layer_range(k).start
    if begin == 1:
        return model.input_size_bytes
    return model.layer(begin - 1).output_bytes


def task_output_bytes(plan: PartitionPlan, model: ModelSpec, k: int) -> float:
    end = plan.layer_range(k).stop - 1
    if end == model.num_layers:
        return model.output_size_bytes
    return model.layer(end).output_bytes


@dataclass(frozen=True)
class SourceSpec:
    source_id: str
    host_worker: str
    model_id: str
    priority_weight: float
    accuracy_gain: float = 1.0
    num_data_points: int = 1
    interarrival: str = "pipelined"

    def violations(self) -> List[str]:
        out = []
        if not self.priority_weight > 0:
            out.append(f"source {self.source_id}: priority_weight must be > 0")
        if not self.accuracy_gain > 0:
            out.append(f"source {self.source_id}: accuracy_gain must be > 0")
        if self.num_data_points < 1:
            out.append(f"source {self.source_id}: num_data_points must be >= 1")
        if self.interarrival != "pipelined":
            out.append(f"source {self.source_id}: unsupported interarrival {self.interarrival!r}")
        return out


TaskId = Tuple[str, int, int]


@dataclass(frozen=True)
class Task:
    source_id: str
    partition_index: int
    data_index: int
    created_at: float
    flops: float
    input_bytes: float
    output_bytes: float
    num_partitions: int = 1
    priority: float = 1.0
    accuracy_gain: float = 1.0

    @property
    def task_id(self) -> TaskId:
        return (self.source_id, self.data_index, self.partition_index)

    @property
    def is_last(self) -> bool:
        return self.partition_index == self.num_partitions

    def age(self, now: float) -> float:
        return now - self.created_at


def make_task(source: SourceSpec, plan: PartitionPlan, model: ModelSpec, k: int, d: int,
              now: float) -> Task:
    return Task(
        source_id=source.source_id,
        partition_index=k,
        data_index=d,
        created_at=now,
        flops=task_flops(plan, model, k),
        input_bytes=task_input_bytes(plan, model, k),
        output_bytes=task_output_bytes(plan, model, k),
        num_partitions=plan.num_partitions,
        priority=source.priority_weight,
        accuracy_gain=source.accuracy_gain,
    )


@dataclass(frozen=True)
class WorkerProfile:
    worker_id: str
    seconds_per_flop: float
    is_source_host: bool = False
    mobile: bool = False

    @property
    def flops_per_second(self) -> float:
        return 1.0 / self.seconds_per_flop

    def violations(self) -> List[str]:
        out = []
        if not self.seconds_per_flop > 0:
            out.append(f"worker {self.worker_id}: seconds_per_flop must be > 0")
        if self.mobile and self.is_source_host:
            out.append(f"worker {self.worker_id}: a source host cannot be mobile")
        return out


class Workload:
    """Sources together with their models and partition plans; builds tasks by id."""

    def __init__(self, sources: Sequence[SourceSpec], models: Dict[str, ModelSpec],
                 plans: Dict[str, PartitionPlan]):
        self.sources = {s.source_id: s for s in sources}
        self.models = dict(models)
        self.plans = dict(plans)

    def source(self, source_id: str) -> SourceSpec:
        return self.sources[source_id]

    def model_of(self, source_id: str) -> ModelSpec:
        return self.models[self.sources[source_id].model_id]

    def plan_of(self, source_id: str) -> PartitionPlan:
        return self.plans[source_id]

    def make_task(self, source_id: str, k: int, d: int, now: float,
                  plan: Optional[PartitionPlan] = None) -> Task:
        source = self.sources[source_id]
        return make_task(source, plan or self.plans[source_id], self.model_of(source_id), k, d, now)
