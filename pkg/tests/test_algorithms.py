import statistics

import pytest

from conftest import ORACLE, algo_program, fresh_net
from simpl import syntax as S
from simpl.algorithms import ALGORITHM_NAMES, load_asset
from simpl.errors import DslRuntimeError
from simpl.model import exact_posterior, parse_model
from simpl.pe import pe
from simpl.rng import RngState
from simpl.runner import CompiledResidual, run_residual
from simpl.syntax import parse_program

# published effort table: name -> annotation count
TABLE2 = {"gibbs": 3, "mh": 3, "likelihood": 2, "rejection": 2}


@pytest.mark.parametrize("algo", ALGORITHM_NAMES)
def test_annotation_counts_match_published_within_one(algo):
    asset = load_asset(algo)
    assert abs(asset.annotation_count - TABLE2[algo]) <= 1, (
        algo, asset.annotation_count)


@pytest.mark.parametrize("algo", ALGORITHM_NAMES)
def test_asset_metadata(algo):
    asset = load_asset(algo)
    assert asset.sampler_kind == ("markov-chain" if algo in ("mh", "gibbs")
                                  else "independent")
    assert asset.uses_burn == (algo in ("mh", "gibbs"))


@pytest.mark.parametrize("algo", ALGORITHM_NAMES)
def test_only_structure_loops_are_unrolled(algo):
    # the sample-count loop binds the harness N; it must never be for/unroll
    program = algo_program(algo)

    def walk(e, found):
        if isinstance(e, S.For):
            for var, it in e.clauses:
                if e.unroll:
                    assert not (isinstance(it, S.Var) and it.name in ("N", "burn")), \
                        f"{algo}: unrolled loop over the sample count"
                else:
                    found.append(it)
            for b in e.body:
                walk(b, found)
        else:
            for child in getattr(e, "body", []) or []:
                walk(child, found)
            for attr in ("cond", "then", "els", "expr", "value", "fn"):
                sub = getattr(e, attr, None)
                if isinstance(sub, S.Expr):
                    walk(sub, found)
            for a in getattr(e, "args", []) or []:
                walk(a, found)
            for _, v in getattr(e, "bindings", []) or []:
                walk(v, found)
            if isinstance(e, S.For):
                pass

    found = []
    for form in program:
        walk(form, found)


def single_node_net(p=0.3):
    return parse_model(f"(node A (parents) (cpt {p})) (query A)")


def test_mh_single_node_stationary_matches_prior():
    net = single_node_net(0.3)
    rp = pe(algo_program("mh"), net)
    res = run_residual(rp, RngState(123), params={"N": 200_000, "burn": 2_000})
    assert abs(res.estimate[0] - 0.3) <= 0.01


def test_mh_zero_probability_proposal_always_rejected():
    # flipping A to false has probability zero; the chain must stay at true
    net = parse_model("(node A (parents) (cpt 1.0)) (query A)")
    rp = pe(algo_program("mh"), net)
    res = run_residual(rp, RngState(5), params={"N": 5_000, "burn": 0})
    assert res.estimate == [1.0, 0.0]


def test_gibbs_deterministic_cpt_always_selects_forced_value():
    net = parse_model("(node A (parents) (cpt 1.0))"
                      "(node B (parents A) (cpt (0.4 0.6))) (evidence B #t) (query A)")
    rp = pe(algo_program("gibbs"), net)
    res = run_residual(rp, RngState(8), params={"N": 2_000, "burn": 0})
    assert res.estimate == [1.0, 0.0]


def test_rejection_without_evidence_accepts_everything():
    net = single_node_net(0.5)
    rp = pe(algo_program("rejection"), net)
    res = run_residual(rp, RngState(2), params={"N": 10_000, "burn": 0})
    accepted = res.estimate[2]
    assert accepted == 10_000.0


def test_rejection_acceptance_rate_tracks_evidence_marginal(burglary):
    # P(J, M) under the prior, from the enumeration oracle's machinery
    pj_m = 0.0
    import itertools
    for b, e, a in itertools.product([True, False], repeat=3):
        pB = 0.05 if b else 0.95
        pE = 0.02 if e else 0.98
        pa = {(1, 1): 0.95, (1, 0): 0.94, (0, 1): 0.29, (0, 0): 0.001}[b, e]
        pA = pa if a else 1 - pa
        pj_m += pB * pE * pA * (0.9 if a else 0.05) * (0.7 if a else 0.01)
    rp = pe(algo_program("rejection"), burglary)
    n = 1_000_000
    res = run_residual(rp, RngState(31), params={"N": n, "burn": 0})
    rate = res.estimate[2] / n
    assert abs(rate - pj_m) <= 0.005


def test_rejection_zero_accepted_is_normalize_class_error():
    net = parse_model("(node A (parents) (cpt 1.0))"
                      "(node B (parents A) (cpt (1.0 0.0)))"
                      "(evidence B #f) (query A)")
    rp = pe(algo_program("rejection"), net)
    with pytest.raises(DslRuntimeError, match="positive"):
        run_residual(rp, RngState(1), params={"N": 100, "burn": 0})


def test_mh_impossible_evidence_errors_after_bounded_retries():
    net = parse_model("(node A (parents) (cpt 1.0))"
                      "(node B (parents A) (cpt (1.0 0.0)))"
                      "(evidence B #f) (query A)")
    rp = pe(algo_program("mh"), net)
    with pytest.raises(DslRuntimeError, match="positive"):
        run_residual(rp, RngState(1), params={"N": 100, "burn": 0})


@pytest.mark.parametrize("algo,n_small", [("likelihood", 1_500), ("rejection", 6_000),
                                          ("mh", 3_000), ("gibbs", 1_500)])
def test_estimator_consistency_error_shrinks_with_n(algo, n_small, burglary):
    # error vs oracle decreases when N is multiplied by 16 (median of 10 seeds)
    oracle = ORACLE["burglary"]
    compiled = CompiledResidual(pe(algo_program(algo), burglary))

    def median_err(n):
        errs = []
        for seed in range(10):
            res = compiled.run(RngState(seed), params={"N": n, "burn": min(200, n // 10)})
            errs.append(abs(res.estimate[0] - oracle))
        return statistics.median(errs)

    assert median_err(16 * n_small) < median_err(n_small)
