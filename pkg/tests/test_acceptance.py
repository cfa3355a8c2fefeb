"""Acceptance suite: one test per acceptance criterion, at stated tolerances.

Each criterion prints a PASS line when it holds (run with -s to stream
them). C-backed checks are gated on the toolchain and skip, never fail,
when it is absent; everything else runs with the primary component alone.
"""

import json
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

import pytest

from conftest import (ALGOS, ORACLE, algo_program, fresh_net, model_path,
                      model_source, needs_cc, toolchain_ready)
from simpl.bench import BenchConfig, benchmark
from simpl.cli import main as cli_main
from simpl.emit_c import emit_c
from simpl.errors import UnsupportedFeatureError
from simpl.interp import interpret
from simpl.ir import CacheStmt, Const, Def, Effect, ForStmt, Ref, dump
from simpl.model import parse_model
from simpl.pe import pe
from simpl.rng import RngState
from simpl.runner import CompiledResidual, run_residual
from simpl.syntax import parse_program

FIXTURES = Path(__file__).parent / "fixtures"

# stated sampling configurations: N, burn, tolerance
STATED = {
    "likelihood": (200_000, 0, 0.01),
    "rejection": (1_000_000, 0, 0.01),
    "mh": (500_000, 5_000, 0.015),
    "gibbs": (200_000, 2_000, 0.01),
}


def ok(line: str):
    print(f"ACCEPTANCE PASS: {line}", file=sys.stderr)


# --- criterion 1: oracle correctness -----------------------------------------------


@pytest.mark.parametrize("model", ["burglary", "csi"])
@pytest.mark.parametrize("algo", ALGOS)
def test_oracle_correctness(model, algo):
    n, burn, tol = STATED[algo]
    oracle = ORACLE[model]
    compiled = CompiledResidual(pe(algo_program(algo), fresh_net(model)))
    t0 = time.time()
    errors = []
    for seed in range(10):
        res = compiled.run(RngState(seed), params={"N": n, "burn": burn})
        errors.append(abs(res.estimate[0] - oracle))
    elapsed = time.time() - t0
    med = statistics.median(errors)
    assert med <= tol, (model, algo, med)
    assert elapsed <= 60.0, f"cell took {elapsed:.1f}s"
    ok(f"oracle correctness {algo} x {model}: median |err| {med:.4f} <= {tol} "
       f"(10 seeds, {elapsed:.1f}s)")


# --- criterion 2: triple equivalence -------------------------------------------------


@pytest.mark.parametrize("model", ["burglary", "csi", "multiburglary"])
@pytest.mark.parametrize("algo", ALGOS)
def test_triple_equivalence_interp_vs_residual(model, algo):
    if model == "multiburglary" and algo == "rejection":
        pytest.skip("rejection never accepts a 1000-alarm evidence pattern")
    n = 20 if model == "multiburglary" else 1_500
    params = {"N": n, "burn": n // 10}
    for seed in (3, 17):
        a = interpret(algo_program(algo), fresh_net(model), RngState(seed),
                      params=params)
        b = run_residual(pe(algo_program(algo), fresh_net(model)), RngState(seed),
                         params=params)
        assert a.estimate == b.estimate, (model, algo, seed)
        assert a.flips == b.flips and a.node_writes == b.node_writes
    ok(f"triple equivalence (interp = residual, bit-exact) {algo} x {model}")


@needs_cc
@pytest.mark.parametrize("model", ["burglary", "csi", "multiburglary"])
@pytest.mark.parametrize("algo", ALGOS)
def test_triple_equivalence_emitted_c(model, algo, tmp_path):
    if model == "multiburglary" and algo == "rejection":
        pytest.skip("rejection never accepts a 1000-alarm evidence pattern")
    from simpl.toolchain import compile_unit, run_compiled
    rp = pe(algo_program(algo), fresh_net(model))
    exe = compile_unit(emit_c(rp, f"acc_{algo}_{model}"), tmp_path)
    n = 200 if model == "multiburglary" else 4_000
    burn = n // 10
    for seed in (3, 17):
        ref = run_residual(rp, RngState(seed), params={"N": n, "burn": burn})
        out = run_compiled(exe, seed, n, burn)
        assert out["estimate"] == ref.estimate, (model, algo, seed)
        assert out["flips"] == ref.flips
    ok(f"triple equivalence (emitted C = residual, bit-exact) {algo} x {model}")


# --- criterion 3: speedup decomposition ------------------------------------------------


@pytest.fixture(scope="module")
def speedup_cells(tmp_path_factory):
    modes = ["interp", "pe", "pe-cache"] + (["c"] if toolchain_ready() else [])
    cfg = BenchConfig(models=[model_path("burglary"), model_path("multiburglary")],
                      algos=["likelihood", "gibbs"], modes=modes,
                      repetitions=3, min_seconds=0.3, seed=1,
                      cache_dir=str(tmp_path_factory.mktemp("oracle-cache")))
    cells = benchmark(cfg)
    return {(c["model"], c["algo"], c["mode"]): c for c in cells}


@pytest.mark.parametrize("model", ["burglary", "multiburglary"])
@pytest.mark.parametrize("algo", ["likelihood", "gibbs"])
def test_speedup_pe_over_interp(speedup_cells, model, algo):
    cell = speedup_cells[(model, algo, "pe")]
    assert cell["speedup_vs_interp"] >= 1.5, cell["speedup_vs_interp"]
    ok(f"speedup pe/interp {algo} x {model}: {cell['speedup_vs_interp']:.1f}x >= 1.5x "
       "(paper band 2-6x, reported not gated)")


@needs_cc
@pytest.mark.parametrize("model", ["burglary", "multiburglary"])
@pytest.mark.parametrize("algo", ["likelihood", "gibbs"])
def test_speedup_c_over_pe_cache(speedup_cells, model, algo):
    c = speedup_cells[(model, algo, "c")]
    pc = speedup_cells[(model, algo, "pe-cache")]
    ratio = pc["ns_per_sample"] / c["ns_per_sample"]
    assert ratio >= 3.0, ratio
    ok(f"speedup c/pe-cache {algo} x {model}: {ratio:.1f}x >= 3x "
       "(paper band 13-20x, reported not gated)")


@needs_cc
@pytest.mark.parametrize("model", ["burglary", "multiburglary"])
@pytest.mark.parametrize("algo", ["likelihood", "gibbs"])
def test_speedup_c_over_interp_overall(speedup_cells, model, algo):
    c = speedup_cells[(model, algo, "c")]
    assert c["speedup_vs_interp"] >= 10.0, c["speedup_vs_interp"]
    ok(f"speedup c/interp {algo} x {model}: {c['speedup_vs_interp']:.0f}x >= 10x "
       "(paper band 30-150x, reported not gated)")


# --- criterion 4: cache soundness ---------------------------------------------------------


def test_cache_key_set_and_cardinality():
    rp = pe(algo_program("likelihood"), fresh_net("burglary"))

    def find(stmts):
        for s in stmts:
            if isinstance(s, CacheStmt):
                return s
            for sub in (getattr(s, "then", None), getattr(s, "els", None),
                        getattr(s, "body", None)):
                if isinstance(sub, list):
                    f = find(sub)
                    if f:
                        return f

    cache = find(rp.body)
    assert cache.keys == ["n_A"]
    res = run_residual(rp, RngState(2), params={"N": 100_000, "burn": 0})
    (stats,) = res.cache_stats
    assert stats["size"] <= 2
    ok(f"cache key set for Burglary weight is exactly {{A}}; table size "
       f"{stats['size']} <= 2")


def test_cache_debug_mode_zero_mismatches_burglary():
    rp = pe(algo_program("likelihood"), fresh_net("burglary"))
    res = run_residual(rp, RngState(5), params={"N": 100_000, "burn": 0},
                       debug_cache=True)
    assert res.estimate[0] > 0  # a mismatch would have aborted
    ok("debug-cache: 0 mismatches over 10^5 samples, likelihood x burglary")


def test_cache_debug_mode_zero_mismatches_multiburglary(tmp_path):
    rp = pe(algo_program("likelihood"), fresh_net("multiburglary"))
    if toolchain_ready():
        from simpl.toolchain import compile_unit, run_compiled
        exe = compile_unit(emit_c(rp, "acc_dbg_multi", debug_cache=True), tmp_path)
        out = run_compiled(exe, 5, 100_000)
        assert out["estimate"][0] >= 0
    else:  # pure-Python path: same semantics, minutes instead of seconds
        res = run_residual(rp, RngState(5), params={"N": 100_000, "burn": 0},
                           debug_cache=True)
        assert res.estimate[0] >= 0
    ok("debug-cache: 0 mismatches over 10^5 samples, likelihood x multiburglary")


# --- criterion 5: residual structure ----------------------------------------------------


def test_residual_structure_burglary_likelihood():
    rp = pe(algo_program("likelihood"), fresh_net("burglary"))
    assert rp.ops_used() & {"parents", "children", "cpt"} == set()
    loops = [s for s in rp.body if isinstance(s, ForStmt)]
    assert len(loops) == 1 and loops[0].bound == Ref("N")
    assert rp.loop_count() == 1
    text = dump(rp)
    for c in ("0.95", "0.94", "0.29", "0.001"):
        assert c in text
    ok("residual structure: no graph ops, one runtime for over N, "
       "alarm constants {0.95, 0.94, 0.29, 0.001} inlined")


def test_residual_size_independent_of_array_length():
    big = pe(algo_program("likelihood"), fresh_net("multiburglary"))
    small_src = model_source("multiburglary").split("(evidence Alarm (")[0] + \
        "(evidence Alarm (#t #f #f #f #f #f #f #f #f #f))\n(query Burglary 0)\n"
    small = pe(algo_program("likelihood"), parse_model(small_src.replace("1000", "10")))
    assert big.statement_count() == small.statement_count()
    ok(f"MultiBurglary residual statement count ({big.statement_count()}) "
       "is independent of array length 1000")


# --- criterion 6: error-path conformance ---------------------------------------------------


def test_error_paths_distinct_and_located(capsys):
    code = cli_main(["run", "--algo-file", str(FIXTURES / "bad_static.simpl"),
                     "--model", model_path("burglary"), "--mode", "pe", "--n", "10"])
    err = capsys.readouterr().err
    assert code == 5 and "line" in err and "static" in err

    code = cli_main(["run", "--algo-file", str(FIXTURES / "infinite_inline.simpl"),
                     "--model", model_path("burglary"), "--mode", "pe", "--n", "10"])
    err = capsys.readouterr().err
    assert code == 6 and "inline stack" in err

    rp = pe(parse_program((FIXTURES / "unsupported_ir.simpl").read_text()
                          .replace("net", "net")), fresh_net("burglary"))
    with pytest.raises(UnsupportedFeatureError):
        emit_c(rp, "nope")
    ok("error paths: bad-static located (exit 5), non-termination with inline "
       "stack (exit 6), unsupported emission refused (exit 7 class)")


# --- criterion 7: primary-only operation ----------------------------------------------------


def test_primary_component_runs_without_toolchain():
    env = dict(os.environ, SIMPL_CC="/nonexistent-cc",
               SIMPL_RT_INCLUDE="/nonexistent-include")
    script = f"""
from simpl.pipeline import Pipeline, load_net
net = load_net({model_path('burglary')!r})
p = Pipeline('likelihood', net)
a = p.run('interp', 4, n=300)
b = p.run('pe', 4, n=300)
c = p.run('pe-cache', 4, n=300)
assert a.estimate == b.estimate == c.estimate
try:
    p.run('c', 4, n=300)
    print('NO-ERROR')
except Exception as e:
    print(type(e).__name__)
"""
    proc = subprocess.run([sys.executable, "-c", script], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "UsageError"
    ok("interp/pe/pe-cache and their checks run with no C toolchain; "
       "mode c degrades to a usage error")


# --- [SECONDARY] baseline cross-check --------------------------------------------------------


CBASE = Path(__file__).resolve().parent.parent / "cbaseline"


def baseline_binary():
    exe = CBASE / "bin" / "simpl_baseline"
    if not exe.exists() and toolchain_ready():
        subprocess.run(["make", "-C", str(CBASE)], capture_output=True)
    return exe if exe.exists() else None


@needs_cc
def test_secondary_baseline_bit_identical():
    exe = baseline_binary()
    if exe is None:
        pytest.skip("baseline not built")
    for model in ("burglary", "csi", "multiburglary"):
        for algo in ALGOS:
            if model == "multiburglary" and algo == "rejection":
                continue
            n = 30 if model == "multiburglary" else 1_000
            ref = interpret(algo_program(algo), fresh_net(model), RngState(8),
                            params={"N": n, "burn": n // 10})
            out = json.loads(subprocess.run(
                [str(exe), model_path(model), algo, "8", str(n), str(n // 10)],
                capture_output=True, text=True).stdout)
            assert out["estimate"] == ref.estimate, (model, algo)
    ok("[secondary] baseline estimates bit-identical to the interpreter on all cells")


@needs_cc
def test_secondary_emitted_beats_baseline_and_simple_model_direction(tmp_path):
    exe = baseline_binary()
    if exe is None:
        pytest.skip("baseline not built")
    from simpl.toolchain import compile_unit, run_compiled

    for model, n in (("burglary", 1_000_000), ("multiburglary", 20_000)):
        rp = pe(algo_program("gibbs"), fresh_net(model))
        prog = compile_unit(emit_c(rp, f"acc_gibbs_{model}"), tmp_path)
        emitted = statistics.median(
            [run_compiled(prog, 1, n, 0)["elapsed_ns"] for _ in range(3)])
        base = statistics.median(
            [json.loads(subprocess.run([str(exe), model_path(model), "gibbs", "1",
                                        str(n), "0"], capture_output=True,
                                       text=True).stdout)["elapsed_ns"]
             for _ in range(3)])
        assert base / emitted > 1.5, (model, base / emitted)
        ok(f"[secondary] emitted C beats unspecialized baseline on gibbs x {model}: "
           f"{base / emitted:.1f}x > 1.5x")

    simple = CBASE / "bin" / "simpl_baseline_simple"
    for model in ("burglary", "csi"):
        n = 2_000_000
        g = statistics.median(
            [json.loads(subprocess.run([str(exe), model_path(model), "gibbs", "1",
                                        str(n), "0"], capture_output=True,
                                       text=True).stdout)["elapsed_ns"]
             for _ in range(3)])
        s = statistics.median(
            [json.loads(subprocess.run([str(simple), model_path(model), "gibbs", "1",
                                        str(n), "0"], capture_output=True,
                                       text=True).stdout)["elapsed_ns"]
             for _ in range(3)])
        assert g / s > 1.0, (model, g / s)
        ok(f"[secondary] simple-vs-general model comparison on {model}: "
           f"{g / s:.2f}x > 1x")
