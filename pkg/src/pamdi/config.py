"""Scenario files: schema, parsing, serialisation and validation.

A scenario is a YAML document with these top-level keys (unknown keys are
rejected)::

    name: fig_test1
    algorithm: PA-MDI            # PA-MDI | AR-MDI | MS-MDI | Local
    seed: 7
    max_sim_time: 20000.0
    compute_jitter: 0.05         # coefficient of variation of compute time
    models:
      resnet50: {builtin: resnet50_224}
      toy: {layers: 10, flops_per_layer: 1.0e9, bytes_per_layer: 1.0e5}
    sources:
      - {id: nts, host: A, model: resnet50, priority: 1.0, data_points: 100, partitions: 2}
      - {id: ts, host: D, model: resnet56, priority: 100.0, cuts: [[1, 17], [18, 33]]}
    workers:
      - {id: A, profile: xavier_nx}
      - {id: B, seconds_per_flop: 5.0e-10, mobile: true}
    network:
      full_mesh: true
      bandwidth_bytes_per_sec: 2.5e6
      propagation_delay_sec: 0.001
      medium: per_link            # or shared
      links: [[A, B], {a: B, b: C, bandwidth_bytes_per_sec: 1.0e6}]
    churn: {mobile: [B], mean_interval_sec: 50.0}
    ring_chains: {nts: [A, B, C, D, E]}
    protocol: {rtc_timeout: null, backlog: total, ar_realloc_every: 10}
"""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import yaml

from .costs import LinkSpec
from .model import (ModelSpec, PartitionPlan, SourceSpec, WorkerProfile, Workload, load_builtin_model,
                    uniform_model, uniform_partition)
from .topology import ChurnProcess, Topology

ALGORITHMS = ("PA-MDI", "AR-MDI", "MS-MDI", "Local")

# Effective single-stream CPU inference throughput, FLOP/s.  Synthetic values
# chosen so that ResNet-50 at 224x224 takes ~4 s on a Xavier NX and ~10 s on a
# Nano; the server node is a many-core Xeon.
PROFILES = {
    "xavier_nx": 1.0 / 2.0e9,
    "jetson_nano": 1.0 / 0.8e9,
    "colosseum_srn": 1.0 / 40.0e9,
}

TOP_KEYS = {"name", "algorithm", "seed", "max_sim_time", "compute_jitter", "models", "sources", "workers",
            "network", "churn", "ring_chains", "protocol"}
SOURCE_KEYS = {"id", "host", "model", "priority", "accuracy_gain", "data_points", "partitions", "cuts",
               "interarrival"}
WORKER_KEYS = {"id", "profile", "seconds_per_flop", "mobile"}
NETWORK_KEYS = {"full_mesh", "bandwidth_bytes_per_sec", "propagation_delay_sec", "medium", "links"}
LINK_KEYS = {"a", "b", "bandwidth_bytes_per_sec", "propagation_delay_sec"}
CHURN_KEYS = {"mobile", "mean_interval_sec"}
PROTOCOL_KEYS = {"rtc_timeout", "backlog", "ar_realloc_every", "self_backlog_includes_task"}
MODEL_KEYS = {"builtin", "layers", "flops_per_layer", "bytes_per_layer", "input_bytes", "output_bytes"}


class ConfigError(ValueError):
    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass
class ScenarioConfig:
    name: str
    algorithm: str
    models: Dict[str, dict]
    sources: List[dict]
    workers: List[dict]
    network: dict
    seed: int = 0
    max_sim_time: float = 1.0e6
    compute_jitter: float = 0.0
    churn: Optional[dict] = None
    ring_chains: Dict[str, List[str]] = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "max_sim_time": self.max_sim_time,
            "compute_jitter": self.compute_jitter,
            "models": copy.deepcopy(self.models),
            "sources": copy.deepcopy(self.sources),
            "workers": copy.deepcopy(self.workers),
            "network": copy.deepcopy(self.network),
        }
        if self.churn is not None:
            out["churn"] = copy.deepcopy(self.churn)
        if self.ring_chains:
            out["ring_chains"] = copy.deepcopy(self.ring_chains)
        if self.protocol:
            out["protocol"] = copy.deepcopy(self.protocol)
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return from_dict(data)

    # ---- derived objects -------------------------------------------------

    def model_specs(self) -> Dict[str, ModelSpec]:
        specs = {}
        for name, ref in self.models.items():
            if "builtin" in ref:
                base = load_builtin_model(ref["builtin"])
                specs[name] = ModelSpec(name, base.layers, base.input_size_bytes, base.output_size_bytes)
            else:
                specs[name] = uniform_model(name, int(ref["layers"]), float(ref["flops_per_layer"]),
                                            float(ref["bytes_per_layer"]), _opt_float(ref.get("input_bytes")),
                                            _opt_float(ref.get("output_bytes")))
        return specs

    def source_specs(self) -> List[SourceSpec]:
        return [
            SourceSpec(
                source_id=str(s["id"]),
                host_worker=str(s["host"]),
                model_id=str(s["model"]),
                priority_weight=float(s.get("priority", 1.0)),
                accuracy_gain=float(s.get("accuracy_gain", 1.0)),
                num_data_points=int(s.get("data_points", 1)),
                interarrival=str(s.get("interarrival", "pipelined")),
            )
            for s in self.sources
        ]

    def partition_plans(self, models: Optional[Dict[str, ModelSpec]] = None) -> Dict[str, PartitionPlan]:
        models = models or self.model_specs()
        plans = {}
        for s in self.sources:
            model = models[s["model"]]
            if "cuts" in s:
                plans[s["id"]] = PartitionPlan(model.model_id, tuple((int(a), int(b)) for a, b in s["cuts"]))
            else:
                plans[s["id"]] = uniform_partition(model, int(s.get("partitions", 1)))
        return plans

    def workload(self) -> Workload:
        models = self.model_specs()
        return Workload(self.source_specs(), models, self.partition_plans(models))

    def worker_profiles(self) -> List[WorkerProfile]:
        hosts = {str(s["host"]) for s in self.sources}
        out = []
        for w in self.workers:
            if "seconds_per_flop" in w:
                spf = float(w["seconds_per_flop"])
            else:
                spf = PROFILES[w.get("profile", "xavier_nx")]
            out.append(WorkerProfile(str(w["id"]), spf, is_source_host=str(w["id"]) in hosts,
                                     mobile=bool(w.get("mobile", False))))
        return out

    def link_specs(self) -> List[LinkSpec]:
        net = self.network
        bw = float(net.get("bandwidth_bytes_per_sec", 2.5e6))
        prop = float(net.get("propagation_delay_sec", 0.0))
        links: Dict[Tuple[str, str], LinkSpec] = {}
        ids = [str(w["id"]) for w in self.workers]
        if net.get("full_mesh", False):
            for i, a in enumerate(ids):
                for b in ids[i + 1:]:
                    link = LinkSpec((a, b), bw, prop)
                    links[link.endpoints] = link
        for entry in net.get("links", []) or []:
            if isinstance(entry, dict):
                link = LinkSpec((str(entry["a"]), str(entry["b"])),
                                float(entry.get("bandwidth_bytes_per_sec", bw)),
                                float(entry.get("propagation_delay_sec", prop)))
            else:
                a, b = entry
                link = LinkSpec((str(a), str(b)), bw, prop)
            links[link.endpoints] = link
        return [links[k] for k in sorted(links)]

    def topology(self) -> Topology:
        return Topology(self.worker_profiles(), self.link_specs())

    def churn_process(self) -> Optional[ChurnProcess]:
        if not self.churn:
            return None
        return ChurnProcess(tuple(str(w) for w in self.churn.get("mobile", [])),
                            float(self.churn.get("mean_interval_sec", 50.0)), int(self.seed))


def _opt_float(value) -> Optional[float]:
    return None if value is None else float(value)


def _check_keys(where: str, data, allowed, out: List[str]):
    if not isinstance(data, dict):
        out.append(f"{where}: expected a mapping")
        return
    for key in data:
        if key not in allowed:
            out.append(f"{where}: unknown key {key!r}")


def schema_violations(data: dict) -> List[str]:
    out: List[str] = []
    _check_keys("scenario", data, TOP_KEYS, out)
    if out:
        return out
    for key in ("name", "algorithm", "models", "sources", "workers", "network"):
        if key not in data:
            out.append(f"scenario: missing key {key!r}")
    for name, ref in (data.get("models") or {}).items():
        _check_keys(f"models.{name}", ref, MODEL_KEYS, out)
    for i, s in enumerate(data.get("sources") or []):
        _check_keys(f"sources[{i}]", s, SOURCE_KEYS, out)
    for i, w in enumerate(data.get("workers") or []):
        _check_keys(f"workers[{i}]", w, WORKER_KEYS, out)
    net = data.get("network")
    if net is not None:
        _check_keys("network", net, NETWORK_KEYS, out)
        for i, link in enumerate((net or {}).get("links", []) or []):
            if isinstance(link, dict):
                _check_keys(f"network.links[{i}]", link, LINK_KEYS, out)
            elif not (isinstance(link, (list, tuple)) and len(link) == 2):
                out.append(f"network.links[{i}]: expected [a, b] or a mapping")
    if data.get("churn") is not None:
        _check_keys("churn", data["churn"], CHURN_KEYS, out)
    if data.get("protocol") is not None:
        _check_keys("protocol", data["protocol"], PROTOCOL_KEYS, out)
    return out


def from_dict(data: dict) -> ScenarioConfig:
    problems = schema_violations(data)
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(
        name=str(data["name"]),
        algorithm=str(data["algorithm"]),
        models=copy.deepcopy(data["models"]),
        sources=copy.deepcopy(data["sources"]),
        workers=copy.deepcopy(data["workers"]),
        network=copy.deepcopy(data["network"]),
        seed=int(data.get("seed", 0)),
        max_sim_time=float(data.get("max_sim_time", 1.0e6)),
        compute_jitter=float(data.get("compute_jitter", 0.0)),
        churn=copy.deepcopy(data.get("churn")),
        ring_chains=copy.deepcopy(data.get("ring_chains") or {}),
        protocol=copy.deepcopy(data.get("protocol") or {}),
    )


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 wants a sign on the exponent ("1.0e+5"); accept "1.0e5" and "2e6" as floats too
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?(?:[eE][-+]?[0-9]+)$""", re.X),
    list("-+0123456789"),
)


def loads(text: str) -> ScenarioConfig:
    data = yaml.load(text, Loader=_Loader)
    if not isinstance(data, dict):
        raise ConfigError(["scenario: top level must be a mapping"])
    return from_dict(data)


def load(path) -> ScenarioConfig:
    return loads(Path(path).read_text())


SCENARIO_DIR = Path(__file__).parent / "scenarios"


def shipped_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))


def load_shipped(name: str) -> ScenarioConfig:
    return load(SCENARIO_DIR / f"{name}.yaml")


def validate_scenario(config: ScenarioConfig) -> List[str]:
    """Every broken invariant or dangling reference, as readable strings."""
    out: List[str] = []
    if config.algorithm not in ALGORITHMS:
        out.append(f"algorithm: {config.algorithm!r} not one of {ALGORITHMS}")
    if not config.max_sim_time > 0:
        out.append("max_sim_time must be > 0")
    if config.compute_jitter < 0:
        out.append("compute_jitter must be >= 0")
    try:
        models = config.model_specs()
    except (KeyError, ValueError, TypeError) as exc:
        return out + [f"models: {exc}"]
    for m in models.values():
        out.extend(m.violations())

    worker_ids = [str(w["id"]) for w in config.workers]
    if len(set(worker_ids)) != len(worker_ids):
        out.append("workers: duplicate ids")
    for w in config.workers:
        if "seconds_per_flop" not in w and w.get("profile", "xavier_nx") not in PROFILES:
            out.append(f"worker {w['id']}: unknown profile {w.get('profile')!r}")
    if any("seconds_per_flop" not in w and w.get("profile", "xavier_nx") not in PROFILES
           for w in config.workers):
        return out
    profiles = config.worker_profiles()
    for p in profiles:
        out.extend(p.violations())

    source_ids = [str(s["id"]) for s in config.sources]
    if not source_ids:
        out.append("sources: at least one source required")
    if len(set(source_ids)) != len(source_ids):
        out.append("sources: duplicate ids")
    for s in config.sources:
        for key in ("id", "host", "model"):
            if key not in s:
                out.append(f"source {s.get('id', '?')}: missing {key!r}")
    if out:
        return out
    for spec in config.source_specs():
        out.extend(spec.violations())
        if spec.host_worker not in worker_ids:
            out.append(f"source {spec.source_id}: unknown host worker {spec.host_worker}")
        if spec.model_id not in models:
            out.append(f"source {spec.source_id}: unknown model {spec.model_id}")
    for s in config.sources:
        if s["model"] not in models:
            continue
        model = models[s["model"]]
        if "cuts" in s:
            plan = PartitionPlan(model.model_id, tuple((int(a), int(b)) for a, b in s["cuts"]))
            out.extend(plan.violations(model))
        else:
            k = int(s.get("partitions", 1))
            if not 1 <= k <= model.num_layers:
                out.append(f"source {s['id']}: partitions must be in 1..{model.num_layers}")

    net = config.network
    if net.get("medium", "per_link") not in ("per_link", "shared"):
        out.append(f"network.medium: {net.get('medium')!r} not per_link/shared")
    try:
        topo = config.topology()
    except (KeyError, ValueError, TypeError) as exc:
        return out + [f"network: {exc}"]
    out.extend(v for v in topo.violations() if not v.startswith("worker "))

    churn = config.churn_process()
    if churn is not None:
        out.extend(churn.violations(topo))

    proto = config.protocol
    if proto.get("backlog", "total") not in ("total", "priority"):
        out.append(f"protocol.backlog: {proto.get('backlog')!r} not total/priority")
    if proto.get("rtc_timeout") is not None and not float(proto["rtc_timeout"]) > 0:
        out.append("protocol.rtc_timeout must be > 0")
    if int(proto.get("ar_realloc_every", 10)) < 1:
        out.append("protocol.ar_realloc_every must be >= 1")

    if config.algorithm in ("AR-MDI", "MS-MDI"):
        for sid in source_ids:
            chain = config.ring_chains.get(sid)
            host = next(str(s["host"]) for s in config.sources if str(s["id"]) == sid)
            if not chain:
                out.append(f"ring_chains: missing chain for source {sid}")
                continue
            if chain[0] != host:
                out.append(f"ring_chains.{sid}: must start at host {host}")
            if len(set(chain)) != len(chain):
                out.append(f"ring_chains.{sid}: repeated worker")
            for w in chain:
                if w not in worker_ids:
                    out.append(f"ring_chains.{sid}: unknown worker {w}")
            model = models.get(next(s["model"] for s in config.sources if str(s["id"]) == sid))
            if model is not None and len(chain) > model.num_layers:
                out.append(f"ring_chains.{sid}: longer than the model's layer count")
    for sid in config.ring_chains:
        if sid not in source_ids:
            out.append(f"ring_chains: unknown source {sid}")
    return out
