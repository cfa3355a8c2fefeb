"""Benchmark harness: the speedup-decomposition experiment.

Each (algorithm x model x mode) cell is timed around its sampling loop only
(parsing, specialization and compilation happen before the clock). The
sample count is scaled up until one run takes at least `min_seconds`, the
run is repeated, and speedups are computed between medians of per-sample
times. A (max - min) / mean above 10% is flagged, not fatal.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import SimplError
from .model import exact_posterior
from .pipeline import MODES, Pipeline, load_net

START_N = {"interp": 4, "pe": 256, "pe-cache": 256, "c": 65536}


@dataclass
class BenchConfig:
    models: list[str]
    algos: list[str]
    modes: list[str]
    repetitions: int = 10
    min_seconds: float = 0.5
    seed: int = 1
    debug_cache: bool = False
    cache_dir: str = ".simpl-cache"
    baseline_general: str | None = None
    baseline_simple: str | None = None
    parallel: bool = False


def _oracle_cached(model_path: str, net, cache_dir: str) -> float:
    path = Path(cache_dir) / "oracle.json"
    key = hashlib.sha256(Path(model_path).read_bytes()).hexdigest()
    table = {}
    if path.exists():
        table = json.loads(path.read_text())
    if key not in table:
        table[key] = exact_posterior(net)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(table, indent=2) + "\n")
    return table[key]


def _scale_n(pipeline: Pipeline, mode: str, seed: int, min_seconds: float) -> tuple:
    """Grow N until one run takes at least min_seconds; returns (N, last outcome)."""
    n = START_N[mode]
    while True:
        out = pipeline.run(mode, seed, n=n, burn=0)
        secs = out.elapsed_ns / 1e9
        if secs >= min_seconds or n >= 50_000_000:
            return n, out
        factor = max(2.0, min_seconds / max(secs, 1e-9) * 1.3)
        n = min(int(n * factor) + 1, 50_000_000)


def run_cell(pipeline: Pipeline, model_name: str, model_path: str, mode: str,
             cfg: BenchConfig, oracle: float) -> dict:
    cell = {"model": model_name, "model_path": model_path, "algo": pipeline.algo,
            "mode": mode, "oracle": oracle}
    try:
        n, first = _scale_n(pipeline, mode, cfg.seed, cfg.min_seconds)
        runs = [first]
        for _ in range(max(cfg.repetitions - 1, 0)):
            runs.append(pipeline.run(mode, cfg.seed, n=n, burn=0))
        elapsed = [r.elapsed_ns for r in runs]
        mean = statistics.fmean(elapsed)
        cell.update({
            "n": n,
            "estimate": runs[-1].estimate,
            "repetitions": len(runs),
            "elapsed_ns_mean": mean,
            "elapsed_ns_median": statistics.median(elapsed),
            "elapsed_ns_min": min(elapsed),
            "elapsed_ns_max": max(elapsed),
            "spread": (max(elapsed) - min(elapsed)) / mean if mean else 0.0,
            "ns_per_sample": statistics.median(elapsed) / n,
            "flips": runs[-1].flips,
            "error": None,
        })
        cell["variance_flagged"] = cell["spread"] > 0.10
        if runs[-1].cache_stats:
            cell["cache"] = runs[-1].cache_stats
        if runs[-1].residual_statements is not None:
            cell["residual_statements"] = runs[-1].residual_statements
            cell["residual_loops"] = runs[-1].residual_loops
    except SimplError as err:
        cell.update({"n": None, "estimate": None, "repetitions": 0,
                     "elapsed_ns_mean": None, "elapsed_ns_median": None,
                     "elapsed_ns_min": None, "elapsed_ns_max": None,
                     "spread": None, "ns_per_sample": None, "flips": None,
                     "variance_flagged": False, "error": str(err)})
    return cell


def _baseline_cell(binary: str, model_path: str, model_name: str, algo: str,
                   cfg: BenchConfig, variant: str) -> dict:
    import subprocess
    cell = {"model": model_name, "algo": algo, "mode": f"baseline-{variant}",
            "error": None}
    n = 65536
    try:
        while True:
            proc = subprocess.run([binary, model_path, algo, str(cfg.seed), str(n), "0"],
                                  capture_output=True, text=True, timeout=600)
            if proc.returncode != 0:
                cell["error"] = proc.stderr.strip() or f"exit {proc.returncode}"
                return cell
            out = json.loads(proc.stdout.strip().splitlines()[-1])
            secs = out["elapsed_ns"] / 1e9
            if secs >= cfg.min_seconds or n >= 50_000_000:
                break
            n = min(int(n * max(2.0, cfg.min_seconds / max(secs, 1e-9) * 1.3)) + 1,
                    50_000_000)
        elapsed = [out["elapsed_ns"]]
        for _ in range(max(cfg.repetitions - 1, 0)):
            proc = subprocess.run([binary, model_path, algo, str(cfg.seed), str(n), "0"],
                                  capture_output=True, text=True, timeout=600)
            out = json.loads(proc.stdout.strip().splitlines()[-1])
            elapsed.append(out["elapsed_ns"])
        cell.update({"n": n, "estimate": out["estimate"],
                     "elapsed_ns_median": statistics.median(elapsed),
                     "ns_per_sample": statistics.median(elapsed) / n})
    except Exception as err:  # baseline is an external process
        cell["error"] = str(err)
    return cell


def _worker(args) -> dict:
    model_path, algo, mode, cfg_dict, oracle = args
    cfg = BenchConfig(**cfg_dict)
    net = load_net(model_path)
    pipeline = Pipeline(algo, net)
    return run_cell(pipeline, Path(model_path).stem, model_path, mode, cfg, oracle)


def benchmark(cfg: BenchConfig) -> list[dict]:
    cells: list[dict] = []
    nets = {}
    for model_path in cfg.models:
        net = load_net(model_path)
        name = Path(model_path).stem
        nets[model_path] = (name, net)

    oracles = {}
    for model_path in cfg.models:
        _, net = nets[model_path]
        try:
            oracles[model_path] = _oracle_cached(model_path, net, cfg.cache_dir)
        except SimplError:
            oracles[model_path] = None

    if cfg.parallel:
        # separate processes; a sampler is never shared between threads
        from concurrent.futures import ProcessPoolExecutor
        jobs = [(mp, algo, mode, vars(cfg), oracles[mp])
                for mp in cfg.models for algo in cfg.algos for mode in cfg.modes]
        with ProcessPoolExecutor() as pool:
            cells = list(pool.map(_worker, jobs))
    else:
        for model_path in cfg.models:
            name, net = nets[model_path]
            for algo in cfg.algos:
                pipeline = Pipeline(algo, net)
                for mode in cfg.modes:
                    cells.append(run_cell(pipeline, name, model_path, mode, cfg,
                                          oracles[model_path]))

    # speedups vs the interp cell of the same (model, algo), per-sample basis
    base = {(c["model"], c["algo"]): c["ns_per_sample"] for c in cells
            if c["mode"] == "interp" and c.get("ns_per_sample")}
    prev = {}
    for c in cells:
        if c.get("ns_per_sample"):
            b = base.get((c["model"], c["algo"]))
            c["speedup_vs_interp"] = b / c["ns_per_sample"] if b else None
            key = (c["model"], c["algo"])
            c["speedup_vs_prev_mode"] = (prev[key] / c["ns_per_sample"]
                                         if key in prev else None)
            prev[key] = c["ns_per_sample"]
        else:
            c["speedup_vs_interp"] = None
            c["speedup_vs_prev_mode"] = None

    if cfg.baseline_general:
        for model_path in cfg.models:
            name, _ = nets[model_path]
            for algo in cfg.algos:
                cells.append(_baseline_cell(cfg.baseline_general, model_path, name,
                                            algo, cfg, "general"))
    if cfg.baseline_simple:
        for model_path in cfg.models:
            name, net = nets[model_path]
            if any(n.is_array for n in net.nodes):
                continue  # the simple structure holds scalar values only
            for algo in cfg.algos:
                cells.append(_baseline_cell(cfg.baseline_simple, model_path, name,
                                            algo, cfg, "simple"))
    return cells


def render_table(cells: list[dict], stream=None) -> None:
    stream = stream if stream is not None else sys.stderr
    header = (f"{'model':<14} {'algo':<11} {'mode':<17} {'n':>9} {'ns/sample':>12} "
              f"{'vs interp':>10} {'estimate':>9}  notes")
    print(header, file=stream)
    print("-" * len(header), file=stream)
    for c in cells:
        if c.get("error"):
            print(f"{c['model']:<14} {c['algo']:<11} {c['mode']:<17} "
                  f"{'-':>9} {'-':>12} {'-':>10} {'-':>9}  error: {c['error'][:50]}",
                  file=stream)
            continue
        est = c["estimate"][0] if c.get("estimate") else float("nan")
        sp = c.get("speedup_vs_interp")
        sps = f"{sp:.1f}x" if sp else "-"
        notes = "variance>10%" if c.get("variance_flagged") else ""
        print(f"{c['model']:<14} {c['algo']:<11} {c['mode']:<17} {c['n']:>9} "
              f"{c['ns_per_sample']:>12.1f} {sps:>10} {est:>9.4f}  {notes}",
              file=stream)
