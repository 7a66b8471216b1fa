import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledhmm.simulation import PAPER_TPM
from coupledhmm.states import (
    NonUniqueStationaryError,
    StateSpace,
    decode_product_state,
    encode_product_state,
    stationary_distribution,
    tpm_to_working,
    validate_tpm,
    working_to_tpm,
)
from oracles import stationary_eig


def test_product_dim():
    assert StateSpace(3, 3).product_dim == 27
    assert StateSpace(1, 4).product_dim == 4


def test_encode_examples():
    s = StateSpace(2, 2)
    assert encode_product_state((1, 1), s) == 0
    assert encode_product_state((2, 2), s) == 3
    assert encode_product_state((1, 2, 3), StateSpace(3, 3)) == 5


def test_two_by_two_order():
    s = StateSpace(2, 2)
    assert [s.decode(i) for i in range(4)] == [(1, 1), (1, 2), (2, 1), (2, 2)]


@pytest.mark.parametrize("bad", [(0, 1), (1, 3), (3, 1)])
def test_encode_out_of_range(bad):
    with pytest.raises(ValueError):
        encode_product_state(bad, StateSpace(2, 2))


def test_encode_wrong_length():
    with pytest.raises(ValueError):
        encode_product_state((1, 1, 1), StateSpace(2, 2))


def test_decode_out_of_range():
    with pytest.raises(ValueError):
        decode_product_state(4, StateSpace(2, 2))


@pytest.mark.parametrize("M,N", [(m, n) for m in range(1, 5) for n in range(1, 10) if n**m <= 81])
def test_bijection_exhaustive(M, N):
    space = StateSpace(M, N)
    seen = set()
    for idx, v in enumerate(itertools.product(range(1, N + 1), repeat=M)):
        assert encode_product_state(v, space) == idx
        assert decode_product_state(idx, space) == v
        seen.add(idx)
    assert seen == set(range(space.product_dim))


def test_stationary_paper_matrix():
    delta = stationary_distribution(PAPER_TPM)
    assert np.allclose(delta, [0.41, 0.09, 0.09, 0.41], atol=0.005)
    assert abs(delta[0] + delta[3] - 0.82) < 0.01


def test_stationary_uniform():
    K = 7
    assert np.allclose(stationary_distribution(np.full((K, K), 1 / K)), 1 / K, atol=1e-14)


def test_stationary_two_state_by_hand():
    # balance: 0.1 d1 = 0.5 d2, d1 + d2 = 1
    delta = stationary_distribution([[0.9, 0.1], [0.5, 0.5]])
    assert np.allclose(delta, [5 / 6, 1 / 6], atol=1e-14)


def test_stationary_reducible():
    with pytest.raises(NonUniqueStationaryError):
        stationary_distribution(np.eye(3))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_stationary_invariants(K, seed):
    rng = np.random.default_rng(seed)
    g = rng.dirichlet(np.ones(K), size=K)
    delta = stationary_distribution(g)
    assert np.all(delta >= 0)
    assert abs(delta.sum() - 1) < 1e-12
    assert np.max(np.abs(delta @ g - delta)) <= 1e-10
    assert np.allclose(delta, stationary_eig(g), atol=1e-8)


def test_working_examples():
    assert tpm_to_working([[0.5, 0.5], [0.5, 0.5]])[0] == 0.0
    w = tpm_to_working([[0.8, 0.2], [0.3, 0.7]])
    assert w[0] == pytest.approx(math.log(0.2 / 0.8), abs=1e-15)
    assert w[0] == pytest.approx(-1.3862944, abs=1e-7)


def test_identity_is_reached_at_minus_infinity_only():
    # working zero means uniform rows, not the identity
    assert np.allclose(working_to_tpm(np.zeros(6), 3), 1 / 3)


def test_round_trip_paper_matrix():
    back = working_to_tpm(tpm_to_working(PAPER_TPM), 4)
    assert np.max(np.abs(back - PAPER_TPM)) <= 1e-10


def test_zero_entries_clamped_with_warning():
    g = np.array([[1.0, 0.0], [0.3, 0.7]])
    with pytest.warns(RuntimeWarning, match="clamped"):
        w = tpm_to_working(g)
    assert np.all(np.isfinite(w))
    assert np.allclose(working_to_tpm(w, 2), g, atol=1e-11)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_round_trip_preserves_stationary(K, seed):
    rng = np.random.default_rng(seed)
    g = rng.dirichlet(np.ones(K) * 0.8, size=K)
    g = np.maximum(g, 1e-9)
    g /= g.sum(axis=1, keepdims=True)
    back = working_to_tpm(tpm_to_working(g), K)
    assert np.max(np.abs(back - g)) <= 1e-10
    assert np.max(np.abs(back.sum(axis=1) - 1)) <= 1e-12
    assert np.allclose(stationary_distribution(back), stationary_distribution(g), atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.lists(st.floats(-30, 30), min_size=30, max_size=30))
def test_working_to_tpm_always_stochastic(K, vals):
    g = working_to_tpm(np.array(vals[: K * (K - 1)]), K)
    assert np.all(g >= 0)
    assert np.max(np.abs(g.sum(axis=1) - 1)) <= 1e-12


@pytest.mark.parametrize(
    "bad",
    [np.ones((2, 3)) / 3, [[0.5, 0.6], [0.5, 0.5]], [[-0.1, 1.1], [0.5, 0.5]]],
)
def test_validate_tpm_rejects(bad):
    with pytest.raises(ValueError):
        validate_tpm(bad)
