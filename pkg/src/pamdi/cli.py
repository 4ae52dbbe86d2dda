"""Command-line runner: ``run``, ``sweep``, ``validate`` and ``oracle``.

Scenario arguments are either a path to a YAML file or the name of a shipped
scenario (see ``pamdi validate --list``).

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 truncated run.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import config as cfg
from .config import ConfigError, ScenarioConfig
from .engine import DeadlockError, SimulationTrace, run

log = logging.getLogger("pamdi")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_TRUNCATED = 0, 1, 2, 3


def resolve_scenario(ref: str) -> ScenarioConfig:
    path = Path(ref)
    if path.exists():
        return cfg.load(path)
    if ref in cfg.shipped_scenarios():
        return cfg.load_shipped(ref)
    raise FileNotFoundError(f"no scenario file or shipped scenario named {ref!r}")


def parse_mu_eta(text: str) -> Tuple[int, int]:
    try:
        mu, eta = (int(x) for x in text.replace("(", "").replace(")", "").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MU,ETA, got {text!r}")
    return mu, eta


def apply_mu_eta(config: ScenarioConfig, mu_eta: Tuple[int, int]) -> ScenarioConfig:
    """Split the highest-priority source's model into mu parts and every other source's into eta."""
    mu, eta = mu_eta
    top = max(config.sources, key=lambda s: (float(s.get("priority", 1.0)), str(s["id"])))
    sources = []
    for s in config.sources:
        s = {k: v for k, v in s.items() if k != "cuts"}
        s["partitions"] = mu if s is top or s["id"] == top["id"] else eta
        sources.append(s)
    return config.replace(sources=sources)


def apply_overrides(config: ScenarioConfig, seed=None, algorithm=None, max_sim_time=None,
                    mu_eta=None) -> ScenarioConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if algorithm is not None:
        changes["algorithm"] = algorithm
    if max_sim_time is not None:
        changes["max_sim_time"] = max_sim_time
    if changes:
        config = config.replace(**changes)
    if mu_eta is not None:
        config = apply_mu_eta(config, mu_eta)
    return config


def comparison_row(config: ScenarioConfig, trace: SimulationTrace, mu_eta=None) -> Dict[str, object]:
    row: Dict[str, object] = {
        "scenario": config.name,
        "algorithm": config.algorithm,
        "seed": config.seed,
        "mu_eta": "" if mu_eta is None else f"{mu_eta[0]},{mu_eta[1]}",
        "truncated": trace.truncated,
        "end_time": round(trace.end_time, 9),
        "messages": trace.protocol_messages,
    }
    for sid, m in trace.metrics().items():
        avg = m["avg_inference_time"]
        row[f"{sid}_avg_inference_time"] = "" if avg is None else round(avg, 9)
        row[f"{sid}_results"] = m["results"]
    return row


def _stem(config: ScenarioConfig, mu_eta=None) -> str:
    stem = f"{config.name}_{config.algorithm}_s{config.seed}"
    if mu_eta is not None:
        stem += f"_mu{mu_eta[0]}eta{mu_eta[1]}"
    return stem


def write_artifacts(out_dir: Path, config: ScenarioConfig, trace: SimulationTrace, mu_eta=None) -> Dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = _stem(config, mu_eta)
    paths = {
        "trace": out_dir / f"{stem}.trace",
        "metrics": out_dir / f"{stem}.metrics.json",
        "row": out_dir / f"{stem}.row.json",
    }
    paths["trace"].write_text(trace.text())
    metrics = {"scenario": config.name, "algorithm": config.algorithm, "seed": config.seed,
               "truncated": trace.truncated, "message_counts": trace.message_counts,
               "violations": trace.violations, "sources": trace.metrics()}
    paths["metrics"].write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    paths["row"].write_text(json.dumps(comparison_row(config, trace, mu_eta), sort_keys=True) + "\n")
    return paths


def run_command(scenario: str, overrides: dict, output_dir: Optional[str]) -> int:
    try:
        config = apply_overrides(resolve_scenario(scenario), **overrides)
        problems = cfg.validate_scenario(config)
        if problems:
            raise ConfigError(problems)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        trace = run(config)
    except DeadlockError as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        log.exception("simulation failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    mu_eta = overrides.get("mu_eta")
    out = Path(output_dir or "results")
    paths = write_artifacts(out, config, trace, mu_eta)
    for sid, m in trace.metrics().items():
        avg = m["avg_inference_time"]
        shown = "n/a" if avg is None else f"{avg:.4f} s"
        print(f"{config.name} {config.algorithm} seed={config.seed} {sid}: avg inference time {shown}"
              f" ({m['results']}/{m['data_points']} results)")
    print(f"wrote {paths['trace']}, {paths['metrics']}, {paths['row']}")
    if trace.violations:
        for v in trace.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_RUNTIME
    if trace.truncated:
        print(f"truncated at t={trace.end_time:.3f}", file=sys.stderr)
        return EXIT_TRUNCATED
    return EXIT_OK


def _sweep_cell(args) -> Dict[str, object]:
    base_dict, algorithm, seed, mu_eta = args
    row: Dict[str, object] = {"algorithm": algorithm, "seed": seed,
                              "mu_eta": "" if mu_eta is None else f"{mu_eta[0]},{mu_eta[1]}"}
    try:
        config = apply_overrides(cfg.from_dict(base_dict), seed=seed, algorithm=algorithm, mu_eta=mu_eta)
        trace = run(config)
        row = comparison_row(config, trace, mu_eta)
        row["error"] = ""
    except Exception as exc:  # noqa: BLE001 - one failed cell must not stop the sweep
        row["scenario"] = base_dict.get("name", "")
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep_cells(algorithms: Sequence[str], seeds: Sequence[int],
                mu_etas: Sequence[Optional[Tuple[int, int]]]) -> List[tuple]:
    cells = []
    for algorithm, seed, mu_eta in itertools.product(algorithms, seeds, mu_etas):
        # (mu, eta) only changes PA-MDI; baselines get one cell per seed
        if algorithm != "PA-MDI" and mu_eta is not None and mu_eta != mu_etas[0]:
            continue
        cells.append((algorithm, seed, mu_eta if algorithm == "PA-MDI" else None))
    return cells


def sweep_command(scenario: str, algorithms: Sequence[str], seeds: Sequence[int],
                  mu_etas: Sequence[Optional[Tuple[int, int]]], output_dir: Optional[str],
                  jobs: int = 1, max_cells: int = 1000) -> int:
    try:
        base = resolve_scenario(scenario)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    cells = sweep_cells(algorithms, seeds, list(mu_etas) or [None])
    if len(cells) > max_cells:
        print(f"invalid: {len(cells)} cells exceeds --max-cells {max_cells}", file=sys.stderr)
        return EXIT_INVALID
    args = [(base.to_dict(), a, s, me) for a, s, me in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, args))
    else:
        rows = [_sweep_cell(a) for a in args]

    fields: List[str] = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    out = Path(output_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{base.name}_sweep.csv"
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    failed = sum(1 for r in rows if r.get("error"))
    print(f"wrote {len(rows)} rows to {path} ({failed} failed)")
    return EXIT_RUNTIME if failed else EXIT_OK


def validate_command(scenarios: Sequence[str]) -> int:
    status = EXIT_OK
    for ref in scenarios:
        try:
            problems = cfg.validate_scenario(resolve_scenario(ref))
        except ConfigError as exc:
            problems = exc.violations
        except (FileNotFoundError, ValueError, KeyError, TypeError) as exc:
            problems = [str(exc)]
        if problems:
            status = EXIT_INVALID
            for v in problems:
                print(f"{ref}: {v}")
        else:
            print(f"{ref}: ok")
    return status


def oracle_command(scenario: str, betas: Sequence[float], cap: int) -> int:
    from .oracle import CapExceededError, OracleInstance, brute_force_optimal, objective

    try:
        config = resolve_scenario(scenario)
        problems = cfg.validate_scenario(config)
        if problems:
            raise ConfigError(problems)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    instance = OracleInstance(config.topology(), config.workload())
    for beta in betas:
        try:
            result = brute_force_optimal(instance, beta, cap=cap)
        except CapExceededError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_INVALID
        joined = objective(result.joined(), instance, beta=beta)
        print(f"beta={beta:g} J*={float(result.value):.9g} joined={float(joined):.9g}"
              f" match={joined == result.value} evaluated={result.evaluated}")
        for (m, d), (seq, _) in sorted(result.point_optima.items()):
            print(f"  {m} d={d}: {' -> '.join(seq)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pamdi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--algorithm", choices=cfg.ALGORITHMS)
    p.add_argument("--max-sim-time", type=float)
    p.add_argument("--mu-eta", type=parse_mu_eta, metavar="MU,ETA",
                   help="partitions for the highest-priority source and for the others")
    p.add_argument("--output-dir", default="results")

    p = sub.add_parser("sweep", help="algorithm x seed x (mu,eta) grid")
    p.add_argument("scenario")
    p.add_argument("--algorithms", nargs="+", default=list(cfg.ALGORITHMS), choices=cfg.ALGORITHMS)
    p.add_argument("--seeds", nargs="+", type=int, default=[0])
    p.add_argument("--mu-eta", nargs="*", type=parse_mu_eta, default=[], metavar="MU,ETA")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-cells", type=int, default=1000)
    p.add_argument("--output-dir", default="results")

    p = sub.add_parser("validate", help="check scenario files")
    p.add_argument("scenarios", nargs="*")
    p.add_argument("--list", action="store_true", help="list shipped scenarios")

    p = sub.add_parser("oracle", help="brute-force optimum of a small scenario")
    p.add_argument("scenario")
    p.add_argument("--beta", type=float, nargs="+", default=None)
    p.add_argument("--cap", type=int, default=10 ** 6)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        overrides = {"seed": args.seed, "algorithm": args.algorithm, "max_sim_time": args.max_sim_time,
                     "mu_eta": args.mu_eta}
        return run_command(args.scenario, overrides, args.output_dir)
    if args.command == "sweep":
        return sweep_command(args.scenario, args.algorithms, args.seeds, args.mu_eta or [None],
                             args.output_dir, args.jobs, args.max_cells)
    if args.command == "validate":
        if args.list:
            for name in cfg.shipped_scenarios():
                print(name)
            return EXIT_OK
        return validate_command(args.scenarios)
    from .oracle import BETA_GRID
    return oracle_command(args.scenario, args.beta or list(BETA_GRID), args.cap)


if __name__ == "__main__":
    sys.exit(main())
