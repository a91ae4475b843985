import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infpriv.budget import (Partition, PrivacyBudget, chain, chain_hops, compose_basic,
                            compose_parallel, distance, post_process)


def B(eps, delta, alpha, p=2):
    return PrivacyBudget(eps, delta, alpha, p)


def fields(b):
    return (b.epsilon, b.delta, b.alpha)


# -- distance ---------------------------------------------------------------

@pytest.mark.parametrize("p, expected", [(2, 5.0), (1, 7.0), ("inf", 4.0), (math.inf, 4.0)])
def test_distance_examples(p, expected):
    assert distance((0, 0), (3, 4), p) == expected


def test_distance_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        distance([0, 0], [1, 2, 3], 2)


def test_distance_rejects_unknown_norm():
    with pytest.raises(ValueError):
        distance([0], [1], 3)


@pytest.mark.parametrize("p", [1, 2, math.inf])
def test_distance_metric_axioms(p):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        x, y, z = rng.normal(size=(3, 6)) * rng.uniform(0.1, 10)
        dxy, dyz, dxz = distance(x, y, p), distance(y, z, p), distance(x, z, p)
        assert dxz <= dxy + dyz + 1e-12
        assert dxy == distance(y, x, p)
        assert distance(x, x, p) == 0
        assert dxy > 0


# -- budget type --------------------------------------------------------------

def test_budget_validation():
    with pytest.raises(ValueError):
        B(0, 0, 0.1)
    with pytest.raises(ValueError):
        B(1, 1.0, 0.1)
    with pytest.raises(ValueError):
        B(1, -0.1, 0.1)
    with pytest.raises(ValueError):
        B(1, 0, -1)
    assert B(1, 0, 0.1).is_pure
    assert not B(1, 1e-5, 0.1).is_pure


@pytest.mark.parametrize("budget", [
    PrivacyBudget(1.0, 1e-5, 0.1, 2),
    PrivacyBudget(0.1 + 0.2, 0.0, 1 / 3, 1),
    PrivacyBudget(2.5, 1.2, 0.7, "inf", vacuous=True),
])
def test_budget_json_round_trip(budget):
    back = PrivacyBudget.from_json(budget.to_json())
    assert back == budget
    assert back.to_dict()["p"] in (1, 2, "inf")


# -- composition ------------------------------------------------------------

def test_compose_basic_examples():
    assert fields(compose_basic([B(1, 1e-5, 0.1)])) == (1, 1e-5, 0.1)
    assert fields(compose_basic([B(1, 1e-5, 0.1), B(0.5, 0, 0.2)])) == (1.5, 1e-5, 0.1)
    out = compose_basic([B(1, 0.6, 0.1), B(1, 0.6, 0.1)])
    assert fields(out) == (2, 1.2, 0.1)
    assert out.vacuous


def test_compose_basic_errors():
    with pytest.raises(ValueError):
        compose_basic([])
    with pytest.raises(ValueError, match="different norms"):
        compose_basic([B(1, 0, 0.1, 1), B(1, 0, 0.1, 2)])


def test_compose_parallel_examples():
    part = Partition(((0, 1), (2, 3)), 4)
    out = compose_parallel([((0, 1), B(1, 1e-5, 0.1)), ((2, 3), B(2, 1e-5, 0.2))], part)
    assert fields(out) == (3, 2e-5, 0.1)

    whole = Partition(((0, 1, 2),), 3)
    assert fields(compose_parallel([((2, 1, 0), B(0.7, 1e-6, 0.3))], whole)) == (0.7, 1e-6, 0.3)

    singles = Partition(((0,), (1,), (2,)), 3)
    out = compose_parallel([((i,), B(1, 0, 0.5)) for i in range(3)], singles)
    assert fields(out) == (3, 0, 0.5)


def test_compose_parallel_errors():
    part = Partition(((0, 1), (2, 3)), 4)
    with pytest.raises(ValueError, match="budgets for"):
        compose_parallel([((0, 1), B(1, 0, 0.1))], part)
    with pytest.raises(ValueError, match="not a block"):
        compose_parallel([((0, 2), B(1, 0, 0.1)), ((1, 3), B(1, 0, 0.1))], part)


@pytest.mark.parametrize("sets, n", [
    (((0, 1), (1, 2)), 3),   # overlap
    (((0,), (2,)), 3),       # gap
    (((0, 5),), 3),          # out of range
    ((), 3),
])
def test_partition_rejects_invalid(sets, n):
    with pytest.raises(ValueError):
        Partition(sets, n)


def test_partition_stores_sorted_blocks():
    assert Partition(((3, 1), (2, 0)), 4).index_sets == ((1, 3), (0, 2))


budgets = st.builds(
    PrivacyBudget,
    epsilon=st.floats(0.01, 5),
    delta=st.floats(0, 1e-2),
    alpha=st.floats(0, 3),
    p=st.just(2),
)


@given(st.lists(budgets, min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_compose_basic_permutation_invariant(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert fields(compose_basic(items)) == fields(compose_basic(shuffled))


@given(budgets, budgets, budgets)
def test_compose_basic_associative_by_flattening(a, b, c):
    # math.fsum makes the flattened and nested sums agree exactly
    nested = compose_basic([compose_basic([a, b]), c])
    flat = compose_basic([a, b, c])
    assert fields(nested) == pytest.approx(fields(flat), rel=1e-15, abs=1e-300)


@given(st.lists(budgets, min_size=1, max_size=6))
def test_compose_parallel_matches_basic(items):
    part = Partition(tuple((i,) for i in range(len(items))), len(items))
    parts = [((i,), b) for i, b in enumerate(items)]
    assert fields(compose_parallel(parts, part)) == fields(compose_basic(items))


# -- chaining ---------------------------------------------------------------

def test_chain_examples():
    assert fields(chain(B(1, 1e-5, 0.1), 0.05)) == (1, 1e-5, 0.05)
    out = chain(B(1, 1e-5, 0.1), 0.3)
    assert out.epsilon == 3 and out.alpha == 0.3
    # 1e-5 * (1 + e + e^2), evaluated with mpmath at 50 digits
    assert out.delta == pytest.approx(1.1107337927389695463e-4, rel=1e-13)
    assert fields(chain(B(1, 0, 0.1, 1), 1.0)) == (10, 0, 1.0)


@pytest.mark.parametrize("alpha, beta, hops", [
    (0.1, 0.3, 3), (0.1, 0.7, 7), (0.1, 1.0, 10), (0.25, 1.0, 4),
    (0.1, 0.30001, 4), (1.0, 0.0, 1), (1.0, 1.0, 1), (0.2, 0.6, 3),
])
def test_chain_hops_exact_multiples(alpha, beta, hops):
    assert chain_hops(alpha, beta) == hops


def test_chain_zero_radius():
    with pytest.raises(ValueError):
        chain(B(1, 1e-5, 0.0), 0.1)
    assert fields(chain(B(1, 1e-5, 0.0), 0.0)) == (1, 1e-5, 0.0)


def test_chain_flags_vacuous_without_clamping():
    out = chain(B(2, 1e-3, 0.1), 1.0)
    expected = math.fsum(math.exp(2 * i) for i in range(10)) * 1e-3
    assert out.vacuous
    assert out.delta == pytest.approx(expected, rel=1e-12)


def test_chain_tiny_epsilon_uses_limit():
    out = chain(B(1e-14, 1e-6, 0.1), 0.5)
    assert out.delta == pytest.approx(5e-6, rel=1e-12)


@settings(max_examples=300)
# subnormal deltas carry too few bits for a relative comparison
@given(st.floats(1e-3, 5), st.floats(0, 1e-2, allow_subnormal=False), st.integers(1, 20))
def test_chain_matches_iterated_sum(eps, delta, h):
    out = chain(B(eps, delta, 0.1), 0.1 * h)
    oracle = math.fsum(math.exp(i * eps) * delta for i in range(h))
    assert out.epsilon == pytest.approx(h * eps, rel=1e-15)
    assert out.delta == pytest.approx(oracle, rel=1e-10, abs=0)


@given(budgets.filter(lambda b: b.alpha > 0), st.floats(0, 1))
def test_chain_within_radius_only_replaces_alpha(b, frac):
    beta = b.alpha * frac
    out = chain(b, beta)
    assert (out.epsilon, out.delta, out.alpha) == (b.epsilon, b.delta, beta)


@given(st.floats(0.01, 5), st.floats(0.01, 2), st.floats(0, 50))
def test_chain_keeps_pure_budgets_pure(eps, alpha, beta):
    assert chain(B(eps, 0, alpha), beta).delta == 0


@pytest.mark.parametrize("b", [B(1, 1e-5, 0.1), B(0.5, 0, 1), B(3, 0.1, 0.2)])
def test_post_process_is_identity(b):
    assert post_process(b) == b
