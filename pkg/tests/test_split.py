import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from splitinf.errors import DomainError
from splitinf.split import (SplitPlan, coin_flip_split, duplex_split, fraction_from_gamma,
                            gamma_from_fraction, randomised_split, simple_split, split_size,
                            stratified_split)

seeds = st.integers(0, 2 ** 32 - 1)
fractions = st.floats(0.01, 0.99)


def assert_partition(plan, n):
    both = np.concatenate([plan.selection_idx, plan.inference_idx])
    assert sorted(both.tolist()) == list(range(n))
    assert np.all(np.diff(plan.selection_idx) > 0)
    assert np.all(np.diff(plan.inference_idx) > 0)


# ------------------------------------------------------------------ gamma

@pytest.mark.parametrize("f, gamma", [(0.5, 1.0), (0.75, 3 ** -0.5), (0.8, 0.5)])
def test_gamma_values(f, gamma):
    assert gamma_from_fraction(f) == pytest.approx(gamma, rel=1e-14)


@given(fractions)
def test_gamma_round_trip(f):
    g = gamma_from_fraction(f)
    assert 1.0 / (1.0 + g * g) == pytest.approx(f, abs=1e-14)
    assert fraction_from_gamma(g) == pytest.approx(f, abs=1e-14)


@pytest.mark.parametrize("f", [0.0, 1.0, -0.2, 1.5])
def test_gamma_domain(f):
    with pytest.raises(DomainError):
        gamma_from_fraction(f)


def test_split_size_rounds_half_up():
    assert split_size(5, 0.5) == 3
    assert split_size(200, 0.75) == 150
    assert split_size(7, 0.5) == 4


# ------------------------------------------------------------ randomised

@given(seeds, fractions, st.floats(0.01, 100.0))
def test_reconstruction(seed, f, sigma):
    r = np.random.default_rng(seed)
    y = r.standard_normal(20) * 5
    uv = randomised_split(y, f, sigma, r)
    np.testing.assert_allclose(uv.reconstruct(), y, rtol=1e-12, atol=1e-12 * np.abs(y).max())
    np.testing.assert_allclose(uv.u, y + uv.gamma * sigma * uv.z)
    np.testing.assert_allclose(uv.v, y - sigma * uv.z / uv.gamma)


def test_uv_moments():
    r = np.random.default_rng(11)
    f = 0.75
    g = gamma_from_fraction(f)
    mu = np.zeros(100_000)
    uv = randomised_split(mu + r.standard_normal(len(mu)), f, 1.0, r)
    assert abs(np.mean(uv.u * uv.v)) <= 0.02
    assert np.var(uv.u) == pytest.approx(1 + g * g, rel=0.03)
    assert np.var(uv.v) == pytest.approx(1 + g ** -2, rel=0.03)


def test_randomised_split_validates(rng):
    with pytest.raises(DomainError):
        randomised_split(np.ones(3), 0.5, 0.0, rng)
    with pytest.raises(DomainError):
        randomised_split(np.ones(3), 1.0, 1.0, rng)


def test_randomised_split_deterministic():
    a = randomised_split(np.arange(5.0), 0.5, 1.0, np.random.default_rng(4))
    b = randomised_split(np.arange(5.0), 0.5, 1.0, np.random.default_rng(4))
    assert a.u.tobytes() == b.u.tobytes()


# ---------------------------------------------------------------- simple

def test_simple_split_uniform_over_subsets():
    r = np.random.default_rng(5)
    counts = {c: 0 for c in itertools.combinations(range(4), 2)}
    draws = 100_000
    for _ in range(draws):
        counts[tuple(simple_split(4, 0.5, r).selection_idx.tolist())] += 1
    for c in counts.values():
        assert abs(c / draws - 1 / 6) <= 0.02


def test_simple_split_two_rows():
    r = np.random.default_rng(6)
    sel = [simple_split(2, 0.5, r).selection_idx[0] for _ in range(4000)]
    assert abs(np.mean(sel) - 0.5) <= 0.03


@given(seeds, st.integers(2, 60), fractions)
def test_simple_split_partition(seed, n, f):
    n1 = split_size(n, f)
    r = np.random.default_rng(seed)
    if not 1 <= n1 < n:
        with pytest.raises(DomainError):
            simple_split(n, f, r)
        return
    plan = simple_split(n, f, r)
    assert_partition(plan, n)
    assert len(plan.selection_idx) == n1


def test_split_plan_rejects_overlap():
    with pytest.raises(DomainError):
        SplitPlan(np.array([0, 1]), np.array([1, 2]), 0.5, "simple")
    with pytest.raises(DomainError):
        SplitPlan(np.array([0]), np.array([1]), 0.5, "random")


# ---------------------------------------------------------------- duplex

def test_duplex_hand_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    plan = duplex_split(X, 0.5)
    assert plan.selection_idx.tolist() == [0, 3]
    assert plan.inference_idx.tolist() == [1, 2]


def test_duplex_hand_example_alternation():
    # seeds {0, 11} and {1, 10}; rows at 5 and 6 are both 5 away from the
    # selection set, so the lower index joins it and the other goes to inference
    X = np.array([[0.0], [1.0], [5.0], [6.0], [10.0], [11.0]])
    plan = duplex_split(X, 0.5)
    assert plan.selection_idx.tolist() == [0, 2, 5]
    assert plan.inference_idx.tolist() == [1, 3, 4]


def test_duplex_uneven_fills_smaller_set_then_dumps():
    X = np.arange(10.0)[:, None] ** 1.5
    plan = duplex_split(X, 0.3)
    assert len(plan.selection_idx) == 3
    assert_partition(plan, 10)


def test_duplex_duplicate_rows_tie_break():
    plan = duplex_split(np.zeros((6, 2)), 0.5)
    assert len(plan.selection_idx) == 3
    assert plan.selection_idx.tolist() == [0, 1, 4]


def test_duplex_errors():
    with pytest.raises(DomainError):
        duplex_split(np.zeros((3, 1)), 0.5)


@given(seeds, st.integers(4, 40), st.sampled_from([0.5, 0.75, 0.3]))
def test_duplex_deterministic_partition(seed, n, f):
    X = np.random.default_rng(seed).standard_normal((n, 3))
    if not 1 <= split_size(n, f) < n:
        return
    a = duplex_split(X, f)
    b = duplex_split(X.copy(), f)
    assert_partition(a, n)
    assert len(a.selection_idx) == split_size(n, f)
    assert a.selection_idx.tolist() == b.selection_idx.tolist()


@given(seeds, st.integers(4, 30))
def test_duplex_permutation_covariant(seed, n):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, 2))  # continuous rows: no distance ties
    perm = r.permutation(n)
    a = duplex_split(X, 0.5)
    b = duplex_split(X[perm], 0.5)
    assert sorted(perm[b.selection_idx].tolist()) == a.selection_idx.tolist()


# ------------------------------------------------------- coin flip, strata

def test_coin_flip_frequency():
    r = np.random.default_rng(7)
    A = np.array([0, 2])
    heads = [coin_flip_split(A, 5, r).selection_idx.tolist() == [0, 2] for _ in range(10_000)]
    assert abs(np.mean(heads) - 0.5) <= 0.01


def test_coin_flip_two_rows():
    r = np.random.default_rng(8)
    plans = {tuple(coin_flip_split([0], 2, r).selection_idx.tolist()) for _ in range(50)}
    assert plans == {(0,), (1,)}


@pytest.mark.parametrize("A", [[], [0, 1, 2], [3]])
def test_coin_flip_domain(A):
    with pytest.raises(DomainError):
        coin_flip_split(A, 3, np.random.default_rng(0))


def test_stratified_examples():
    r = np.random.default_rng(9)
    groups = [[0, 1, 2], [3, 4, 5]]
    plan = stratified_split(groups, 1, r)
    assert len(plan.selection_idx) == 2
    assert len(set(plan.selection_idx.tolist()) & {0, 1, 2}) == 1
    plan = stratified_split(groups, 2, r)
    assert len(set(plan.inference_idx.tolist()) & {3, 4, 5}) == 1
    with pytest.raises(DomainError):
        stratified_split([[0, 1], [2, 3, 4]], 1, r)
    with pytest.raises(DomainError):
        stratified_split(groups, 3, r)


@pytest.mark.parametrize("make", [
    lambda r: simple_split(6, 0.5, r),
    lambda r: coin_flip_split([0, 1, 2], 6, r),
    lambda r: stratified_split([[0, 1, 2], [3, 4, 5]], 1, r),
])
def test_constant_inclusion(make):
    # 10^5 draws: the 0.01 band is about six binomial standard errors
    r = np.random.default_rng(10)
    hits = np.zeros(6)
    draws = 100_000
    for _ in range(draws):
        plan = make(r)
        assert_partition(plan, 6)
        hits[plan.selection_idx] += 1
    freq = hits / draws
    assert np.max(np.abs(freq - len(make(r).selection_idx) / 6)) <= 0.01
