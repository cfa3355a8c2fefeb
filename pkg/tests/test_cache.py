import pytest
from hypothesis import given, settings, strategies as st

from conftest import algo_program, fresh_net
from simpl.algorithms import prelude_source
from simpl.errors import CacheMismatchError, DslRuntimeError
from simpl.ir import CacheStmt, Const
from simpl.model import parse_model
from simpl.pe import pe
from simpl.rng import RngState
from simpl.runner import CompiledResidual, run_residual
from simpl.syntax import parse_program


def find_cache(rp):
    def walk(stmts):
        for s in stmts:
            if isinstance(s, CacheStmt):
                return s
            for sub in (getattr(s, "then", None), getattr(s, "els", None),
                        getattr(s, "body", None)):
                if isinstance(sub, list):
                    found = walk(sub)
                    if found:
                        return found
        return None
    return walk(rp.body)


def test_burglary_weight_cache_key_is_exactly_alarm(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    cache = find_cache(rp)
    assert cache is not None
    assert cache.keys == ["n_A"]
    info = rp.caches[cache.cache_id]
    assert info.dense
    assert [k[0] for k in info.keys] == ["n_A"]


def test_burglary_cache_table_at_most_two_entries(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    res = run_residual(rp, RngState(3), params={"N": 50_000, "burn": 0})
    (stats,) = res.cache_stats
    assert stats["size"] <= 2
    assert stats["hits"] + stats["misses"] == 50_000


def test_fully_static_cache_body_emits_no_cache():
    net = parse_model("(node A (parents) (cpt 0.5)) (query A)")
    rp = pe(parse_program("(cache 3.5)"), net)
    assert rp.result == Const(3.5)
    assert rp.caches == {}


def test_caching_randomness_is_an_error():
    net = parse_model("(node A (parents) (cpt 0.5)) (query A)")
    with pytest.raises(DslRuntimeError, match="effectful"):
        pe(parse_program("(cache (flip 0.5))"), net)
    with pytest.raises(DslRuntimeError, match="effectful"):
        pe(parse_program("(print (cache (+ 0.5 (flip 0.5))))"), net)


def test_caching_node_write_is_an_error(burglary):
    src = prelude_source() + """
(cache (begin (set-value! (list-ref (nodes net) 0) #t) 1.0))
"""
    with pytest.raises(DslRuntimeError, match="effectful"):
        pe(parse_program(src), burglary)


def test_cache_body_local_accumulator_is_allowed(multiburglary):
    # the array-weight loop writes only its own accumulator vector
    rp = pe(algo_program("likelihood"), multiburglary)
    cache = find_cache(rp)
    assert cache is not None
    assert set(cache.keys) == {"n_Burglary", "n_Earthquake"}
    assert not rp.caches[cache.cache_id].dense  # array key, hash table


@pytest.mark.parametrize("seed", [1, 7, 23])
def test_cache_transparency_bit_exact(seed, burglary):
    prog = algo_program("likelihood")
    params = {"N": 5_000, "burn": 0}
    with_cache = run_residual(pe(prog, burglary), RngState(seed), params=params)
    without = run_residual(pe(prog, burglary, enable_cache=False), RngState(seed),
                           params=params)
    assert with_cache.estimate == without.estimate
    assert with_cache.flips == without.flips


def test_debug_mode_clean_on_sound_cache(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    res = run_residual(rp, RngState(5), params={"N": 10_000, "burn": 0},
                       debug_cache=True)
    assert res.estimate[0] > 0  # ran to completion: no mismatch abort


def test_debug_mode_catches_poisoned_table(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    compiled = CompiledResidual(rp, debug_cache=True)
    from simpl.cache import RtCache
    caches = {cid: RtCache(cid) for cid in rp.caches}
    (cid,) = caches
    caches[cid].table[(True,)] = -99.0  # unsound stored value
    caches[cid].table[(False,)] = -99.0
    with pytest.raises(CacheMismatchError):
        compiled.run(RngState(5), params={"N": 100, "burn": 0}, caches=caches)


def test_first_lookup_is_a_miss(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    res = run_residual(rp, RngState(2), params={"N": 1, "burn": 0})
    (stats,) = res.cache_stats
    assert stats == {"id": stats["id"], "hits": 0, "misses": 1, "size": 1}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.booleans(), st.booleans(), st.booleans())
def test_key_completeness_non_key_cells_do_not_matter(seed, b, e, a):
    # randomizing non-key cells between lookups with equal key tuples never
    # changes the looked-up value: compute weight twice with B/E scrambled
    net = fresh_net("burglary")
    src = prelude_source() + """
(define (scramble b e)
  (set-value! (list-ref (nodes net) 0) b)
  (set-value! (list-ref (nodes net) 1) e))
(define (probe a b e)
  (set-value! (list-ref (nodes net) 2) a)
  (scramble b e)
  (cache (weight-any evidence)))
(vector (probe (flip 0.5) (flip 0.5) (flip 0.5))
        (probe (flip 0.5) (flip 0.5) (flip 0.5)))
"""
    rp = pe(parse_program(src), net)
    cache = find_cache(rp)
    assert cache.keys == ["n_A"]
    res = run_residual(rp, RngState(seed), params={"N": 1, "burn": 0})
    rng = RngState(seed)
    draws = [rng.flip(0.5) for _ in range(6)]
    if draws[0] == draws[3]:  # equal key tuples -> equal cached values
        assert res.estimate[0] == res.estimate[1]


def test_cardinality_bound_boolean_keys(burglary):
    rp = pe(algo_program("likelihood"), burglary)
    res = run_residual(rp, RngState(17), params={"N": 20_000, "burn": 0})
    (stats,) = res.cache_stats
    nbools = sum(1 for _, kind, _ in rp.caches[stats["id"]].keys if kind == "bool")
    assert stats["size"] <= 2 ** nbools
