from fractions import Fraction

import numpy as np
import pytest

from builders import random_small_config
from pamdi import config
from pamdi.oracle import (CapExceededError, OracleInstance, PolicyAssignment, brute_force_optimal, objective,
                          per_task_minimizer)


def _instance(data_points=1, partitions=1, workers=("A", "B", "C"), spf=(1e-9, 5e-10, 2e-9), gamma=2.0):
    cfg = config.from_dict({
        "name": "o", "algorithm": "PA-MDI",
        "models": {"m": {"layers": 2, "flops_per_layer": 1e9, "bytes_per_layer": 1e6}},
        "sources": [{"id": "s", "host": "A", "model": "m", "priority": gamma, "accuracy_gain": 1.5,
                     "data_points": data_points, "partitions": partitions}],
        "workers": [{"id": w, "seconds_per_flop": x} for w, x in zip(workers, spf)],
        "network": {"full_mesh": True, "bandwidth_bytes_per_sec": 1e6},
    })
    return OracleInstance(cfg.topology(), cfg.workload())


def test_accuracy_only_when_beta_zero():
    inst = _instance(data_points=3)
    result = brute_force_optimal(inst, 0.0)
    assert result.value == Fraction(2) * Fraction(3) * Fraction(1.5)


def test_single_task_objective_difference():
    inst = _instance()
    flops = Fraction(2e9)
    rho = {
        "A": flops * Fraction(1e-9),
        "B": Fraction(1e6) / Fraction(1e6) + flops * Fraction(5e-10),  # one hop, then compute
        "C": Fraction(1e6) / Fraction(1e6) + flops * Fraction(2e-9),
    }
    beta = Fraction(3)
    j = {w: objective(PolicyAssignment({("s", 1, 1): w}), inst, beta=beta) for w in "ABC"}
    assert j["A"] - j["C"] == beta * (rho["C"] - rho["A"])
    assert j["B"] - j["C"] == beta * (rho["C"] - rho["B"])


def test_certain_failure_zeroes_accuracy():
    inst = _instance()
    a = PolicyAssignment({("s", 1, 1): "B"})
    assert objective(a, inst, {"B": 1.0}, beta=0.0) == 0


def test_one_task_three_workers_matches_ratio_minimizer():
    inst = _instance(spf=(2e-9, 5e-10, 1e-9))
    result = brute_force_optimal(inst, 1.0)
    want, _ = per_task_minimizer(inst, ("s", 1, 1), "A", ["A", "B", "C"])
    assert result.best[("s", 1, 1)] == want == "B"
    assert result.ratio_minimizers[("s", 1)][0] == ("B",)


def test_all_tied_when_beta_zero_and_p_equal():
    inst = _instance(partitions=2)
    values = set()
    for a in "ABC":
        for b in "ABC":
            values.add(objective(PolicyAssignment({("s", 1, 1): a, ("s", 1, 2): b}), inst, {w: 0.1 for w in "ABC"},
                                 beta=0.0))
    assert len(values) == 1


def test_relabeling_workers_preserves_objective():
    rng = np.random.default_rng(5)
    cfg = random_small_config(rng, 3, 1, 1, 2)
    data = cfg.to_dict()
    rename = {"A": "Z", "B": "Y", "C": "X"}
    for w in data["workers"]:
        w["id"] = rename[w["id"]]
    for link in data["network"]["links"]:
        link["a"], link["b"] = rename[link["a"]], rename[link["b"]]
    for s in data["sources"]:
        s["host"] = rename[s["host"]]
    original = OracleInstance(cfg.topology(), cfg.workload())
    relabeled_cfg = config.from_dict(data)
    relabeled = OracleInstance(relabeled_cfg.topology(), relabeled_cfg.workload())
    for beta in (0.1, 1.0):
        r1 = brute_force_optimal(original, beta)
        mapped = PolicyAssignment({k: rename[w] for k, w in r1.best.mapping.items()})
        assert objective(mapped, relabeled, beta=beta) == r1.value
        assert brute_force_optimal(relabeled, beta).value == r1.value


def test_cap_enforced():
    with pytest.raises(CapExceededError):
        brute_force_optimal(_instance(data_points=4, partitions=2), 1.0, cap=1000)


def test_assignment_totality():
    inst = _instance(partitions=2)
    assert PolicyAssignment({("s", 1, 1): "A"}).violations(inst) == ["task ('s', 1, 2) unassigned"]
