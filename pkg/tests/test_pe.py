from pathlib import Path

import pytest

from conftest import algo_program, fresh_net, MODELS, ALGOS
from simpl.algorithms import prelude_source
from simpl.errors import (BadStaticError, DslRuntimeError, NonTerminationError,
                          UnsupportedFeatureError)
from simpl.ir import Const, Def, Flip, ForStmt, IfStmt, canonical_dump, dump, to_source, validate
from simpl.model import parse_model
from simpl.pe import pe
from simpl.syntax import parse_program

GOLDEN = Path(__file__).parent / "golden"

STRUCT_OPS = {"parents", "children", "cpt", "evidencep", "nodes", "arraylength",
              "car", "cdr", "cons", "nullp", "second", "member", "length",
              "listref", "list", "readnode"}


def tiny_net():
    return parse_model("(node A (parents) (cpt 0.5)) (query A)")


def specialize(src, net=None, **kw):
    return pe(parse_program(prelude_source() + "\n" + src), net or tiny_net(), **kw)


def golden_check(name, rp):
    expected = (GOLDEN / f"{name}.ir").read_text()
    assert dump(rp) == expected


# --- lifting primitives -------------------------------------------------------------


def test_fully_static_program_is_a_constant():
    rp = specialize("(+ 2 3)")
    assert rp.body == [] and rp.result == Const(5)


def test_square_trace_golden(burglary):
    rp = pe(parse_program(
        "(define (square x) (* x x))"
        "(for ([i 10]) (print (square (+ i 1))))"), burglary)
    golden_check("square", rp)
    defs = [s for s in rp.body[0].body if isinstance(s, Def)]
    assert [d.op for d in defs] == ["add", "mul"]
    assert defs[1].args == [defs[1].args[0], defs[1].args[0]]  # (* v v)


def test_add_zero_simplification():
    # (+ 0 x) with dynamic x emits nothing new and returns x itself
    rp = specialize("(lift (+ 0 (lift 2.5)))")
    assert rp.body == []
    assert rp.result == Const(2.5)


def test_mul_one_simplification():
    rp = specialize("(print (* 1 (+ (lift 2) 3)))")
    adds = [s for s in rp.body if isinstance(s, Def)]
    assert len(adds) == 1 and adds[0].op == "add"


def test_lift_of_literal():
    rp = specialize("(lift 2)")
    assert rp.body == [] and rp.result == Const(2)


def test_lift_plus_concrete_emits_runtime_add():
    # (+ (lift 2) 3) delays the addition until runtime
    rp = specialize("(print (+ (lift 2) 3))")
    (add, _) = rp.body
    assert isinstance(add, Def) and add.op == "add"
    assert add.args == [Const(2), Const(3)]


# --- conditionals ---------------------------------------------------------------------


def test_concrete_condition_drops_untaken_branch():
    rp = specialize("(if (null? '()) 1 (flip 0.5))")
    assert rp.body == [] and rp.result == Const(1)
    rp = specialize("(print (if (null? '(1)) 1.5 2.5))")
    assert rp.result == Const(None)
    assert not any(isinstance(s, IfStmt) for s in rp.body)


def test_residual_condition_joins_both_branches(burglary):
    rp = pe(parse_program("(print (if (value query) 0 1))"), burglary)
    kinds = [type(s).__name__ for s in rp.body]
    assert kinds == ["Def", "DeclCell", "IfStmt", "PrintStmt"]


def test_evidence_membership_branch_eliminated(burglary):
    rp = pe(parse_program(prelude_source() + "\n(sample net evidence)"), burglary)
    golden_check("sample_burglary", rp)
    assert not any(isinstance(s, IfStmt) and False for s in rp.body)
    flips = dump(rp).count(":= flip")
    assert flips == 3  # J and M vanish entirely


def test_truecp_alarm_two_nested_selects(burglary):
    rp = pe(parse_program(prelude_source() +
                          "\n(lift (true-cp (list-ref (nodes net) 2)))"), burglary)
    golden_check("truecp_alarm", rp)
    text = dump(rp)
    for c in ("0.95", "0.94", "0.29", "0.001"):
        assert c in text
    assert text.count("if ") == 3  # outer select plus one per branch


# --- loops ---------------------------------------------------------------------------


def test_for_unroll_specializes_each_node(burglary):
    rp = pe(parse_program(prelude_source() + "\n(sample net evidence)"), burglary)
    assert rp.loop_count() == 0
    assert dump(rp).count(":= flip") == 3


def test_runtime_for_is_kept(burglary):
    prog = algo_program("likelihood")
    rp = pe(prog, burglary)
    loops = [s for s in rp.body if isinstance(s, ForStmt)]
    assert len(loops) == 1
    assert loops[0].bound == __import__("simpl.ir", fromlist=["Ref"]).Ref("N")


def test_for_unroll_over_empty_list_emits_nothing():
    rp = specialize("(for/unroll ([x '()]) (flip 0.5))")
    assert rp.body == []


def test_for_unroll_over_dynamic_iterable_is_bad_static():
    with pytest.raises(BadStaticError, match="node"):
        specialize("(for ([j 5]) (for/unroll ([node (list j)]) (print node)))")


def test_residual_for_evaluates_iterable_first():
    rp = specialize("(for ([i (+ (lift 2) 3)]) (print i))")
    add, loop = rp.body
    assert isinstance(add, Def) and isinstance(loop, ForStmt)


def test_residual_for_over_concrete_list_residualizes_elements(burglary):
    rp = pe(parse_program("(for ([node net]) (print (evidence? node)))"), burglary)
    loop = rp.body[0]
    assert isinstance(loop, ForStmt) and loop.bound == Const(5)
    assert any(isinstance(s, Def) and s.op == "listref" for s in loop.body)
    assert any(isinstance(s, Def) and s.op == "evidencep" for s in loop.body)


# --- static / lift ----------------------------------------------------------------------


def test_static_failure_reports_location():
    with pytest.raises(BadStaticError) as exc:
        specialize("(for ([i 10]) (print (static (+ i 1))))")
    assert exc.value.span is not None


def test_static_forces_evaluation():
    rp = specialize("(static (+ 1 2))")
    assert rp.result == Const(3)


def test_static_mode_restored_after_error():
    net = tiny_net()
    prog = parse_program(prelude_source() + "\n(static (flip 0.5))")
    with pytest.raises(BadStaticError, match="randomness"):
        pe(prog, net)
    # a fresh run on the same engine entry point still works
    rp = pe(parse_program("(print (flip 0.5))"), net)
    assert any(isinstance(s, Flip) for s in rp.body)


def test_static_vector_mutation_allowed_within_extent():
    rp = specialize("""
(static (let ([v (vector 1 2)])
  (vector-set! v 0 10)
  (vector-ref v 0)))
""")
    assert rp.result == Const(10)


def test_mutation_of_outer_runtime_vector_inside_static_rejected():
    with pytest.raises(BadStaticError):
        specialize("(let ([v (vector 1 2)]) (static (vector-set! v 0 9)))")


def test_flip_inside_static_is_error():
    with pytest.raises(BadStaticError, match="randomness"):
        specialize("(static (flip 0.5))")


# --- inlining ------------------------------------------------------------------------


def test_index_base_case_is_concrete(burglary):
    rp = pe(parse_program(prelude_source() +
                          "\n(lift (true-cp (list-ref (nodes net) 0)))"), burglary)
    assert rp.body == [] and rp.result == Const(0.05)  # zero-parent node


def test_unbounded_recursion_hits_depth_limit():
    with pytest.raises(NonTerminationError) as exc:
        specialize("(define (f x) (f x)) (print (f (lift 1)))", inline_limit=500)
    assert "f" in exc.value.inline_stack


def test_default_inline_limit_is_10000():
    with pytest.raises(NonTerminationError) as exc:
        specialize("(define (f x) (f x)) (print (f (lift 1)))")
    assert len(exc.value.inline_stack) >= 10_000


def test_no_inline_when_symbolic_is_refused():
    src = ("(define (f x) #:no-inline-when-symbolic (x) (+ x 1))"
           "(print (f (lift 3)))")
    with pytest.raises(UnsupportedFeatureError, match="no-inline-when-symbolic"):
        specialize(src)
    # concrete arguments still inline
    rp = specialize("(define (f x) #:no-inline-when-symbolic (x) (+ x 1)) (f 3)")
    assert rp.result == Const(4)


def test_arguments_evaluated_once():
    # the argument flip happens exactly once even though the body uses x twice
    rp = specialize("(define (twice x) (+ x x)) (print (twice (flip 0.5)))")
    assert dump(rp).count(":= flip") == 1


# --- whole-program properties -----------------------------------------------------------


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("algo", ALGOS)
def test_no_structure_survives_and_ssa_holds(model, algo):
    rp = pe(algo_program(algo), fresh_net(model))
    assert rp.ops_used() & STRUCT_OPS == set()
    validate(rp)  # temp-SSA and operand visibility


def test_likelihood_burglary_golden(burglary):
    golden_check("likelihood_burglary", pe(algo_program("likelihood"), burglary))


def test_gibbs_sweep_golden(burglary):
    src = """
(define (gibbs-update-scalar node)
  (set-value! node #t)
  (let ([p1 (blanket-score node)])
    (set-value! node #f)
    (let ([p0 (blanket-score node)])
      (set-value! node (flip (/ p1 (require-positive (+ p1 p0))))))))
(define (gibbs-sweep ns)
  (for/unroll ([node ns])
    (gibbs-update-scalar node)))
(gibbs-sweep (non-evidence-nodes net evidence))
"""
    rp = specialize(src, burglary)
    golden_check("gibbs_sweep_burglary", rp)
    assert dump(rp).count(":= flip") == 3  # one update block per non-evidence node


@pytest.mark.parametrize("algo", ["likelihood", "gibbs"])
def test_idempotent_specialization(algo, burglary):
    rp = pe(algo_program(algo), burglary)
    rendered = to_source(rp)
    rp2 = pe(parse_program(rendered), fresh_net("burglary"))
    assert canonical_dump(rp2) == canonical_dump(rp)


def test_multiburglary_statement_count_independent_of_array_length(multiburglary):
    rp_big = pe(algo_program("likelihood"), multiburglary)
    small_src = fresh_net("multiburglary").source.replace("1000", "10")
    # keep only 10 evidence entries
    small_src = small_src.split("(evidence Alarm (")[0] + \
        "(evidence Alarm (#t #f #f #f #f #f #f #f #f #f))\n(query Burglary 0)\n"
    rp_small = pe(algo_program("likelihood"), parse_model(small_src))
    assert rp_big.statement_count() == rp_small.statement_count()
    assert rp_big.loop_count() == rp_small.loop_count()


def test_pe_result_runs_same_for_any_rng_policy(burglary):
    with pytest.raises(DslRuntimeError):
        pe(algo_program("likelihood"), burglary, rng_policy="pe-time")
