import json
import subprocess

import pytest

from conftest import ALGOS, MODELS, algo_program, fresh_net, needs_cc
from simpl.emit_c import emit_c
from simpl.errors import UnsupportedFeatureError
from simpl.ir import Const, Def, Effect, Ref, ResidualProgram
from simpl.model import parse_model
from simpl.pe import pe
from simpl.rng import RngState
from simpl.runner import run_residual
from simpl.syntax import parse_program


def test_square_statement_emits_expected_line(burglary):
    rp = pe(parse_program(
        "(define (square x) (* x x))"
        "(for ([i 10]) (print (square (+ i 0.5))))"), burglary)
    unit = emit_c(rp, "square")
    assert "double v1 = v0 * v0;" in unit.code
    assert "double v0 = i0 + 0.5;" in unit.code
    # integer temps map to integer locals
    rp2 = pe(parse_program(
        "(define (square x) (* x x))"
        "(for ([i 10]) (print (square (+ i 1))))"), burglary)
    assert "int64_t v1 = v0 * v0;" in emit_c(rp2, "isquare").code


def test_unsupported_construct_is_rejected():
    rp = ResidualProgram(params=[], body=[Def("v0", "parents", [Const(None)])],
                         result=Const(None), temp_kinds={"v0": "obj"})
    with pytest.raises(UnsupportedFeatureError, match="parents"):
        emit_c(rp, "bad")


def test_dynamic_effect_is_rejected():
    rp = ResidualProgram(params=[], body=[Effect("setnode", [Const(None)])],
                         result=Const(None))
    with pytest.raises(UnsupportedFeatureError, match="setnode"):
        emit_c(rp, "bad")


def test_manifest_fields(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    unit = emit_c(rp, "lw", default_burn=7)
    m = unit.manifest
    assert m["entry"] == "main" and m["rt_header"] == "simpl_rt.h"
    assert m["params"] == ["N"]
    assert m["default_burn"] == 7 and m["estimate_len"] == 2
    assert "cc_recommended" in m


@needs_cc
class TestCompiled:
    @pytest.fixture(scope="class")
    def workdir(self, tmp_path_factory):
        return tmp_path_factory.mktemp("cbuild")

    def compile(self, rp, name, workdir, **kw):
        from simpl.toolchain import compile_unit
        return compile_unit(emit_c(rp, name, **kw), workdir)

    def test_empty_residual_compiles_and_prints_empty_estimate(self, workdir):
        net = parse_model("(node A (parents) (cpt 0.5)) (query A)")
        rp = pe(parse_program("(begin)"), net)
        exe = self.compile(rp, "empty", workdir)
        out = subprocess.run([str(exe), "1", "10"], capture_output=True, text=True)
        assert json.loads(out.stdout)["estimate"] == []

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("algo", ALGOS)
    def test_compiled_bit_exact_vs_executor(self, model, algo, workdir):
        if model == "multiburglary" and algo == "rejection":
            pytest.skip("rejection never accepts a 1000-alarm evidence pattern")
        from simpl.toolchain import run_compiled
        net = fresh_net(model)
        rp = pe(algo_program(algo), net)
        exe = self.compile(rp, f"{algo}_{model}", workdir)
        n = 200 if model == "multiburglary" else 3_000
        burn = n // 10
        ref = run_residual(rp, RngState(9), params={"N": n, "burn": burn})
        out = run_compiled(exe, 9, n, burn)
        assert out["estimate"] == ref.estimate  # bit-exact
        assert out["flips"] == ref.flips

    def test_rng_state_dump_matches_python(self, burglary, workdir):
        from simpl.toolchain import rng_dump
        rp = pe(algo_program("likelihood"), burglary)
        exe = self.compile(rp, "lw_rng", workdir)
        for k in (1, 10**3, 10**6):
            st = RngState(424242)
            for _ in range(k):
                st.next_u64()
            dumped = rng_dump(exe, 424242, k)
            assert dumped["state"] == st.state
            assert dumped["draws"] == k

    def test_debug_cache_mode_runs_clean(self, burglary, workdir):
        from simpl.toolchain import run_compiled
        rp = pe(algo_program("likelihood"), burglary)
        exe = self.compile(rp, "lw_dbg", workdir, debug_cache=True)
        out = run_compiled(exe, 3, 50_000)
        (stats,) = out["cache"]
        assert stats["size"] <= 2 and stats["hits"] + stats["misses"] == 50_000

    def test_cache_stats_match_python(self, multiburglary, workdir):
        from simpl.toolchain import run_compiled
        rp = pe(algo_program("likelihood"), multiburglary)
        exe = self.compile(rp, "lw_multi", workdir)
        ref = run_residual(rp, RngState(6), params={"N": 300, "burn": 0})
        out = run_compiled(exe, 6, 300)
        assert out["estimate"] == ref.estimate
        assert out["cache"] == ref.cache_stats

    def test_runtime_error_exit_code(self, workdir):
        net = parse_model("(node A (parents) (cpt 0.5)) (query A)")
        rp = pe(parse_program("(normalize (vector 0 0))"), net)
        exe = self.compile(rp, "zero", workdir)
        proc = subprocess.run([str(exe), "1", "10"], capture_output=True, text=True)
        assert proc.returncode == 9
        assert "zero" in proc.stderr
