import pytest
from hypothesis import given, strategies as st

from simpl.errors import DslRuntimeError
from simpl.rng import RngState

# frozen from an independent evaluation of the documented mixing formulas
# (they coincide with the published reference outputs for this generator)
SEED0_FIRST3 = [16294208416658607535, 7960286522194355700, 487617019471545679]


def test_seed0_golden_outputs():
    r = RngState(0)
    assert [r.next_u64() for _ in range(3)] == SEED0_FIRST3


def test_independent_reimplementation_agrees():
    mask = (1 << 64) - 1

    def reference(state, n):
        out = []
        for _ in range(n):
            state = (state + 0x9E3779B97F4A7C15) & mask
            z = ((state ^ (state >> 30)) * 0xBF58476D1CE4E5B9) & mask
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
            out.append(z ^ (z >> 31))
        return out

    r = RngState(987654321)
    assert [r.next_u64() for _ in range(100)] == reference(987654321, 100)


def test_uniform_uses_top_53_bits():
    r1, r2 = RngState(7), RngState(7)
    u = r1.uniform()
    assert u == (r2.next_u64() >> 11) / (1 << 53)
    assert 0.0 <= u < 1.0


def test_flip_edges():
    r = RngState(3)
    assert not any(r.flip(0.0) for _ in range(1000))
    assert all(r.flip(1.0) for _ in range(1000))  # uniform < 1.0 strictly


def test_flip_counts_draws():
    r = RngState(5)
    for _ in range(17):
        r.flip(0.5)
    assert r.draws == 17


def test_flip_out_of_range():
    with pytest.raises(DslRuntimeError):
        RngState(1).flip(1.5)
    with pytest.raises(DslRuntimeError):
        RngState(1).flip(-0.1)


def test_random_index_consumes_one_draw():
    r = RngState(11)
    r.random_index(10)
    assert r.draws == 1
    with pytest.raises(DslRuntimeError):
        r.random_index(0)


@given(st.integers(min_value=0, max_value=2**64 - 1), st.floats(0.0, 1.0))
def test_flip_matches_uniform_threshold(seed, p):
    a, b = RngState(seed), RngState(seed)
    assert a.flip(p) == (b.uniform() < p)


@given(st.integers(min_value=0, max_value=2**64 - 1),
       st.integers(min_value=1, max_value=10**6))
def test_random_index_in_range(seed, k):
    v = RngState(seed).random_index(k)
    assert 0 <= v < k


def test_determinism_across_instances():
    a, b = RngState(2024), RngState(2024)
    assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]
