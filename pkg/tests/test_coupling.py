import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledhmm.coupling import (
    Coupling,
    CouplingKind,
    as_kind,
    build_cartesian,
    build_cond_indep,
    build_independent,
    build_mixture_weight,
    build_single_chain,
    count_parameters,
    mixture_marginals,
)
from coupledhmm.simulation import PAPER_TPM
from coupledhmm.states import StateSpace, stationary_distribution
from conftest import random_params
from oracles import chain_tuples, cond_indep_tpm, kron_all, mixture_tpm

KINDS = [k.value for k in CouplingKind]


def _rows_ok(g):
    return np.all(g >= 0) and np.all(g <= 1) and np.max(np.abs(g.sum(axis=1) - 1)) <= 1e-12


@pytest.mark.parametrize(
    "kind,expected", [("cartesian", 702), ("cond_indep", 162), ("mixture_weight", 60)]
)
def test_counts_three_by_three(kind, expected):
    assert count_parameters(kind, StateSpace(3, 3)) == expected


def test_counts_formulae():
    s = StateSpace(2, 4)
    assert count_parameters("independent", s) == 2 * 4 * 3
    assert count_parameters("single_chain", s) == 12


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("M,N", [(1, 2), (2, 2), (2, 3), (3, 2)])
def test_count_matches_working_dimension(kind, M, N, rng):
    c = Coupling(kind, StateSpace(M, N))
    nat = c.random_start(rng)
    assert len(c.to_working(nat)) == count_parameters(kind, StateSpace(M, N)) == c.n_working


def test_aliases():
    assert as_kind("CartesianFull") is CouplingKind.CARTESIAN
    assert as_kind("IndependentChains") is CouplingKind.INDEPENDENT
    assert as_kind("single-chain") is CouplingKind.SINGLE_CHAIN
    with pytest.raises(ValueError):
        as_kind("brand")


def test_cartesian_pass_through():
    assert np.array_equal(build_cartesian(PAPER_TPM), PAPER_TPM)
    assert np.array_equal(build_cartesian(np.eye(5)), np.eye(5))


def test_cartesian_shape_error():
    with pytest.raises(ValueError):
        build_cartesian(np.ones((2, 3)) / 3)


def test_single_chain():
    assert np.array_equal(build_single_chain(np.eye(2)), np.eye(2))
    assert Coupling("single_chain", StateSpace(3, 2)).K == 2


def test_independent_example():
    A = np.array([[0.9, 0.1], [0.2, 0.8]])
    B = np.array([[0.7, 0.3], [0.4, 0.6]])
    g = build_independent([A, B])
    assert g[0, 0] == pytest.approx(0.63, abs=1e-15)
    states = chain_tuples(2, 2)
    for i, (a, b) in enumerate(states):
        for j, (c, d) in enumerate(states):
            assert g[i, j] == pytest.approx(A[a, c] * B[b, d], abs=1e-15)


def test_independent_identity():
    assert np.array_equal(build_independent([np.eye(2), np.eye(2)]), np.eye(4))


def test_independent_stationary_is_outer_product(rng):
    A, B = rng.dirichlet(np.ones(3), 3), rng.dirichlet(np.ones(3), 3)
    d = stationary_distribution(build_independent([A, B]))
    assert np.allclose(d, np.outer(stationary_distribution(A), stationary_distribution(B)).ravel(), atol=1e-12)


def test_cond_indep_matches_oracle(rng):
    M, N = 3, 2
    marg = rng.dirichlet(np.ones(N), size=(M, N**M))
    assert np.allclose(build_cond_indep(marg), cond_indep_tpm(marg, M, N), atol=1e-15)


def test_cond_indep_chain_only_equals_independent(rng):
    M, N = 2, 3
    tpms = [rng.dirichlet(np.ones(N), N) for _ in range(M)]
    S = chain_tuples(M, N)
    marg = np.array([[tpms[m][s[m]] for s in S] for m in range(M)])
    assert np.allclose(build_cond_indep(marg), build_independent(tpms), atol=1e-15)


def test_mixture_matches_oracle(rng):
    M, N = 3, 2
    Q = rng.dirichlet(np.ones(N), size=(M, M, N))
    w = rng.dirichlet(np.ones(M), M)
    assert np.allclose(build_mixture_weight(Q, w), mixture_tpm(Q, w, M, N), atol=1e-15)


def test_mixture_self_weight_equals_independent(rng):
    M, N = 3, 2
    Q = rng.dirichlet(np.ones(N), size=(M, M, N))
    g = build_mixture_weight(Q, np.eye(M))
    assert np.allclose(g, build_independent([Q[m, m] for m in range(M)]), atol=1e-15)


def test_mixture_identical_components():
    P = np.array([[0.8, 0.2], [0.35, 0.65]])
    Q = np.broadcast_to(P, (2, 2, 2, 2))
    marg = mixture_marginals(Q, np.full((2, 2), 0.5))
    S = chain_tuples(2, 2)
    for a, s in enumerate(S):
        assert np.allclose(marg[0, a], P[s[0]] * 0.5 + P[s[1]] * 0.5)
    # when both chains share the previous state, chain 1 follows P exactly
    assert np.allclose(marg[0, 0], P[0]) and np.allclose(marg[0, 3], P[1])


def test_mixture_rejects_bad_weights(rng):
    Q = rng.dirichlet(np.ones(2), size=(2, 2, 2))
    with pytest.raises(ValueError):
        build_mixture_weight(Q, np.array([[0.7, 0.7], [0.5, 0.5]]))


def test_cartesian_with_kron_entries_is_independent(rng):
    A, B = rng.dirichlet(np.ones(2), 2), rng.dirichlet(np.ones(2), 2)
    c = Coupling("cartesian", StateSpace(2, 2))
    ci = Coupling("independent", StateSpace(2, 2))
    assert np.allclose(c.tpm({"gamma": kron_all([A, B])}), ci.tpm({"tpms": np.stack([A, B])}), atol=1e-15)


@settings(max_examples=1000, deadline=None)
@given(
    st.sampled_from(KINDS),
    st.integers(1, 3),
    st.integers(1, 3),
    st.floats(0.05, 5.0),
    st.integers(0, 2**32 - 1),
)
def test_builders_always_stochastic(kind, M, N, conc, seed):
    rng = np.random.default_rng(seed)
    spec, params = random_params(rng, kind, M, N, conc)
    c = spec.transitions
    c.validate(params.transition)
    g = c.tpm(params.transition)
    assert g.shape == (c.K, c.K)
    assert _rows_ok(g)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(KINDS), st.integers(1, 3), st.integers(2, 3), st.integers(0, 2**32 - 1))
def test_working_round_trip(kind, M, N, seed):
    rng = np.random.default_rng(seed)
    c = Coupling(kind, StateSpace(M, N))
    nat = c.random_start(rng)
    back = c.from_working(c.to_working(nat))
    for key in nat:
        assert np.max(np.abs(np.asarray(back[key]) - np.asarray(nat[key]))) <= 1e-10
    assert np.allclose(c.tpm(back), c.tpm(nat), atol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
def test_relabel_matches_permuted_matrix(kind, rng):
    M, N = 2, 3
    _, params = random_params(rng, kind, M, N)
    c = Coupling(kind, StateSpace(M, N))
    perms = [rng.permutation(N) for _ in range(M)]
    if kind == "single_chain":
        perms = [perms[0]] * M
    g = c.tpm(params.transition)
    g_new = c.tpm(c.relabel(params.transition, perms))
    # new product state (a, b) is old state (perm0[a], perm1[b])
    S = c.state_map
    old = [int(sum(perms[m][S[k, m]] * N ** (M - 1 - m) for m in range(M))) if kind != "single_chain" else perms[0][k]
           for k in range(c.K)]
    assert np.allclose(g_new, g[np.ix_(old, old)], atol=1e-14)


def test_random_start_diagonal_range(rng):
    c = Coupling("cartesian", StateSpace(2, 2))
    g = c.random_start(rng)["gamma"]
    assert np.all((np.diag(g) >= 0.7) & (np.diag(g) <= 0.95))
    assert _rows_ok(g)
