import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledhmm import kernels
from oracles import enum_loglik, enum_posteriors, enum_viterbi, scaled_forward_loglik

BACKENDS = ["python"]
try:
    kernels.backend_module("cython")
    BACKENDS.append("cython")
except ImportError:
    pass


def _instance(seed, T, K):
    rng = np.random.default_rng(seed)
    gamma = rng.dirichlet(np.ones(K), K)
    delta = rng.dirichlet(np.ones(K))
    logp = rng.normal(-1.0, 1.5, (T, K))
    return logp, gamma, delta


@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 6), K=st.integers(1, 4))
def test_against_enumeration(backend, seed, T, K):
    mod = kernels.backend_module(backend)
    logp, gamma, delta = _instance(seed, T, K)
    dens = np.exp(logp)
    ll = mod.forward_loglik(logp, gamma, delta)
    assert ll == pytest.approx(enum_loglik(gamma, delta, dens), abs=1e-10)
    ll2, post, _, _ = mod.forward_backward(logp, gamma, delta)
    assert ll2 == pytest.approx(ll, abs=1e-12)
    assert np.allclose(post, enum_posteriors(gamma, delta, dens), atol=1e-10)
    path, best = mod.viterbi(logp, np.log(gamma), np.log(delta))
    want, p = enum_viterbi(gamma, delta, dens)
    assert np.array_equal(np.asarray(path), want)
    assert best == pytest.approx(np.log(p), abs=1e-10)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_backends_agree_long_series():
    logp, gamma, delta = _instance(3, 5000, 9)
    py, cy = kernels.backend_module("python"), kernels.backend_module("cython")
    assert cy.forward_loglik(logp, gamma, delta) == pytest.approx(py.forward_loglik(logp, gamma, delta), rel=1e-13)
    a, b = py.forward_backward(logp, gamma, delta), cy.forward_backward(logp, gamma, delta)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-11, atol=1e-11)
    pa, _ = py.viterbi(logp, np.log(gamma), np.log(delta))
    pc, _ = cy.viterbi(logp, np.log(gamma), np.log(delta))
    assert np.array_equal(np.asarray(pa), np.asarray(pc))


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_scaled_reference(backend):
    mod = kernels.backend_module(backend)
    logp, gamma, delta = _instance(9, 20000, 8)
    logp *= 20  # densities far below the double range in linear space
    assert mod.forward_loglik(logp, gamma, delta) == pytest.approx(scaled_forward_loglik(gamma, delta, logp), rel=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_likelihood_raises(backend):
    mod = kernels.backend_module(backend)
    logp = np.array([[0.0, -np.inf], [-np.inf, 0.0]])
    gamma = np.eye(2)
    delta = np.array([0.5, 0.5])
    with pytest.raises(FloatingPointError):
        mod.forward_loglik(logp, gamma, delta)


@pytest.mark.parametrize("backend", BACKENDS)
def test_viterbi_ties_go_low(backend):
    mod = kernels.backend_module(backend)
    K = 3
    logp = np.zeros((4, K))
    lg = np.log(np.full((K, K), 1 / K))
    path, _ = mod.viterbi(logp, lg, np.log(np.full(K, 1 / K)))
    assert list(path) == [0, 0, 0, 0]


def test_pure_python_switch():
    env = dict(os.environ, COUPLEDHMM_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from coupledhmm import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
