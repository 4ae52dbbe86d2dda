"""Small scenario builders shared by the tests."""
import numpy as np

from pamdi import config


def toy_config(algorithm="PA-MDI", workers=("A", "B"), sources=None, layers=4, flops_per_layer=1.0e9,
               bytes_per_layer=1.0e5, spf=1.0e-9, bandwidth=1.0e7, seed=0, **extra):
    sources = sources or [{"id": "s", "host": workers[0], "model": "toy", "priority": 1.0,
                           "data_points": 3, "partitions": 2}]
    data = {
        "name": "toy",
        "algorithm": algorithm,
        "seed": seed,
        "models": {"toy": {"layers": layers, "flops_per_layer": flops_per_layer,
                           "bytes_per_layer": bytes_per_layer}},
        "sources": sources,
        "workers": [{"id": w, "seconds_per_flop": spf} for w in workers],
        "network": {"full_mesh": True, "bandwidth_bytes_per_sec": bandwidth},
    }
    data.update(extra)
    if algorithm in ("AR-MDI", "MS-MDI") and "ring_chains" not in data:
        data["ring_chains"] = {s["id"]: [s["host"]] + [w for w in workers if w != s["host"]]
                               for s in sources}
    return config.from_dict(data)


def contention_config(seed: int):
    """Random static scenario built so that several requesters chase the same fast helpers."""
    rng = np.random.default_rng([seed, 99])
    n_workers = int(rng.integers(3, 6))
    ids = [chr(ord("A") + i) for i in range(n_workers)]
    n_sources = int(rng.integers(2, min(3, n_workers - 1) + 1))
    hosts = ids[:n_sources]
    workers = []
    for w in ids:
        slow = w in hosts
        spf = float(rng.uniform(2e-9, 8e-9) if slow else rng.uniform(2e-10, 1e-9))
        workers.append({"id": w, "seconds_per_flop": spf})
    sources = []
    for i, h in enumerate(hosts):
        sources.append({"id": f"m{i}", "host": h, "model": "toy", "priority": float(rng.choice([1.0, 10.0, 100.0])),
                        "data_points": int(rng.integers(2, 6)), "partitions": int(rng.integers(1, 4))})
    if rng.random() < 0.5:
        network = {"full_mesh": True, "bandwidth_bytes_per_sec": float(rng.uniform(1e6, 1e8)),
                   "medium": "shared" if rng.random() < 0.3 else "per_link"}
    else:
        links = [[ids[i], ids[i + 1]] for i in range(n_workers - 1)]
        for a in range(n_workers):
            for b in range(a + 2, n_workers):
                if rng.random() < 0.5:
                    links.append([ids[a], ids[b]])
        network = {"full_mesh": False, "bandwidth_bytes_per_sec": float(rng.uniform(1e6, 1e8)), "links": links}
    network["propagation_delay_sec"] = float(rng.uniform(0, 1e-3))
    protocol = {"backlog": "priority" if rng.random() < 0.3 else "total"}
    if rng.random() < 0.3:
        # deliberately tight deadlines so timeouts race with grants
        protocol["rtc_timeout"] = float(rng.uniform(1e-4, 5e-3))
    return config.from_dict({
        "name": f"contention_{seed}",
        "algorithm": "PA-MDI",
        "seed": seed,
        "compute_jitter": float(rng.choice([0.0, 0.1])),
        "models": {"toy": {"layers": 6, "flops_per_layer": float(rng.uniform(1e7, 1e9)),
                           "bytes_per_layer": float(rng.uniform(1e3, 1e6))}},
        "sources": sources,
        "workers": workers,
        "network": network,
        "protocol": protocol,
    })


def random_small_config(rng, n_workers, n_sources, data_points, partitions, layers=6):
    """Random connected static topology with uniform toy models, for oracle checks."""
    ids = [chr(ord("A") + i) for i in range(n_workers)]
    order = list(rng.permutation(ids))
    links = []
    for i in range(1, n_workers):
        # attach each new node to a random earlier one: always connected
        links.append({"a": order[i], "b": order[int(rng.integers(0, i))],
                      "bandwidth_bytes_per_sec": float(rng.uniform(1e5, 1e8)),
                      "propagation_delay_sec": float(rng.uniform(0, 1e-2))})
    for a in range(n_workers):
        for b in range(a + 1, n_workers):
            pair = {ids[a], ids[b]}
            if rng.random() < 0.4 and not any({l["a"], l["b"]} == pair for l in links):
                links.append({"a": ids[a], "b": ids[b], "bandwidth_bytes_per_sec": float(rng.uniform(1e5, 1e8)),
                              "propagation_delay_sec": float(rng.uniform(0, 1e-2))})
    sources = []
    models = {}
    for i in range(n_sources):
        models[f"m{i}"] = {"layers": layers, "flops_per_layer": float(rng.uniform(1e7, 1e10)),
                           "bytes_per_layer": float(rng.uniform(1e3, 1e7)),
                           "input_bytes": float(rng.uniform(1e3, 1e7))}
        sources.append({"id": f"s{i}", "host": ids[int(rng.integers(0, n_workers))], "model": f"m{i}",
                        "priority": float(rng.uniform(0.5, 100)), "accuracy_gain": float(rng.uniform(0.5, 2)),
                        "data_points": data_points, "partitions": partitions})
    return config.from_dict({
        "name": "random_small",
        "algorithm": "PA-MDI",
        "models": models,
        "sources": sources,
        "workers": [{"id": w, "seconds_per_flop": float(rng.uniform(1e-10, 1e-8))} for w in ids],
        "network": {"full_mesh": False, "links": links},
    })
