"""Cross-checks against the handcoded C baseline (the separate cbaseline/
component, reached only through its process contract)."""

import itertools
import json
import statistics
import subprocess
from pathlib import Path

import pytest

from conftest import algo_program, fresh_net, model_path, toolchain_ready
from simpl.interp import interpret
from simpl.rng import RngState
from simpl.syntax import parse_program

CBASE = Path(__file__).resolve().parent.parent / "cbaseline"

pytestmark = pytest.mark.skipif(not toolchain_ready(),
                                reason="C toolchain not available")


@pytest.fixture(scope="module")
def binaries():
    proc = subprocess.run(["make", "-C", str(CBASE)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return {"general": CBASE / "bin" / "simpl_baseline",
            "simple": CBASE / "bin" / "simpl_baseline_simple"}


def run_baseline(binary, model, algo, seed, n, burn=0):
    proc = subprocess.run([str(binary), model_path(model), algo, str(seed),
                           str(n), str(burn)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


def test_self_test_script(binaries):
    proc = subprocess.run(["make", "-C", str(CBASE), "test"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.parametrize("model", ["burglary", "csi", "multiburglary"])
@pytest.mark.parametrize("algo", ["likelihood", "rejection", "mh", "gibbs"])
def test_baseline_bit_identical_to_interpreter(model, algo, binaries):
    if model == "multiburglary" and algo == "rejection":
        pytest.skip("rejection never accepts a 1000-alarm evidence pattern")
    n = 40 if model == "multiburglary" else 2_000
    burn = n // 10
    ref = interpret(algo_program(algo), fresh_net(model), RngState(21),
                    params={"N": n, "burn": burn})
    out = run_baseline(binaries["general"], model, algo, 21, n, burn)
    assert out["estimate"] == ref.estimate  # bit-exact
    assert out["flips"] == ref.flips


@pytest.mark.parametrize("k", [1, 10**3, 10**6])
def test_prng_state_dump_equality(k, binaries):
    st = RngState(777)
    for _ in range(k):
        st.next_u64()
    proc = subprocess.run([str(binaries["general"]), "rngdump", "777", str(k)],
                          capture_output=True, text=True)
    dumped = json.loads(proc.stdout)
    assert dumped["state"] == st.state and dumped["draws"] == k


def test_flattened_cpt_agrees_with_nested_indexing(tmp_path, binaries):
    # exhaustive over all parent-value tuples, up to four parents, against
    # the DSL's recursive nested-list indexer
    bn = tmp_path / "chain.bn"
    bn.write_text(
        "(node P0 (parents) (cpt 0.11))"
        "(node P1 (parents) (cpt 0.23))"
        "(node P2 (parents) (cpt 0.31))"
        "(node P3 (parents) (cpt 0.47))"
        "(node D1 (parents P0) (cpt (0.9 0.1)))"
        "(node D2 (parents P0 P1) (cpt ((0.81 0.64) (0.49 0.36))))"
        "(node D3 (parents P0 P1 P2) (cpt (((0.1 0.2) (0.3 0.4)) ((0.5 0.6) (0.7 0.8)))))"
        "(node D4 (parents P0 P1 P2 P3) (cpt ((((0.01 0.02) (0.03 0.04))"
        " ((0.05 0.06) (0.07 0.08))) (((0.09 0.11) (0.12 0.13))"
        " ((0.14 0.15) (0.16 0.17))))))"
        "(query P0)")
    proc = subprocess.run([str(binaries["general"]), "cpt-selftest", str(bn)],
                          capture_output=True, text=True)
    flattened = json.loads(proc.stdout)

    from simpl.model import parse_model
    net = parse_model(bn.read_text())
    for name in ("D1", "D2", "D3", "D4"):
        node = net.by_name[name]
        np_ = len(node.parents)
        for mask in range(1 << np_):
            setters = []
            for p, parent in enumerate(node.parents):
                v = "#t" if ((mask >> (np_ - 1 - p)) & 1) == 0 else "#f"
                setters.append(f"(set-value! (list-ref (nodes net) {parent.index}) {v})")
            src = ("(define (index cpt parents) (if (null? parents) cpt "
                   "(if (value (car parents)) (index (first cpt) (cdr parents)) "
                   "(index (second cpt) (cdr parents)))))"
                   + " ".join(setters) +
                   f"(index (CPT (list-ref (nodes net) {node.index}))"
                   f" (parents (list-ref (nodes net) {node.index})))")
            got = interpret(parse_program(src), net, RngState(1)).value
            assert got == flattened[name][mask], (name, mask)


def median_ns(binary, model, algo, seed, n, reps=5):
    times = [run_baseline(binary, model, algo, seed, n)["elapsed_ns"]
             for _ in range(reps)]
    return statistics.median(times)


@pytest.mark.parametrize("model,n", [("burglary", 1_000_000), ("multiburglary", 20_000)])
def test_emitted_c_beats_unspecialized_baseline_on_gibbs(model, n, binaries, tmp_path):
    from simpl.emit_c import emit_c
    from simpl.pe import pe
    from simpl.toolchain import compile_unit, run_compiled
    rp = pe(algo_program("gibbs"), fresh_net(model))
    exe = compile_unit(emit_c(rp, f"gibbs_{model}"), tmp_path)
    emitted = statistics.median(
        [run_compiled(exe, 1, n, 0)["elapsed_ns"] for _ in range(5)])
    baseline = median_ns(binaries["general"], model, "gibbs", 1, n)
    assert baseline / emitted > 1.5


@pytest.mark.parametrize("model", ["burglary", "csi"])
def test_simple_model_speedup_direction(model, binaries):
    n = 2_000_000
    general = median_ns(binaries["general"], model, "gibbs", 1, n)
    simple = median_ns(binaries["simple"], model, "gibbs", 1, n)
    assert general / simple > 1.0


def test_simple_structure_agrees_on_scalar_models(binaries):
    for algo in ("likelihood", "rejection", "mh", "gibbs"):
        g = run_baseline(binaries["general"], "burglary", algo, 99, 3_000, 300)
        s = run_baseline(binaries["simple"], "burglary", algo, 99, 3_000, 300)
        assert g["estimate"] == s["estimate"]


def test_simple_structure_rejects_array_models(binaries):
    proc = subprocess.run([str(binaries["simple"]), model_path("multiburglary"),
                           "gibbs", "1", "10", "0"], capture_output=True, text=True)
    assert proc.returncode != 0
    assert "general model structure" in proc.stderr


def test_unknown_algorithm_is_usage_error(binaries):
    proc = subprocess.run([str(binaries["general"]), model_path("burglary"),
                           "sorcery", "1", "10"], capture_output=True, text=True)
    assert proc.returncode == 2
