"""Reference computations that share no code with the library.

Everything here is brute force: explicit enumeration of state sequences,
scipy.stats densities and plain-Python index arithmetic.
"""

import itertools
import math

import numpy as np
from scipy import stats


def chain_tuples(M, N):
    """Product states in order, chain 1 most significant (0-based)."""
    return list(itertools.product(range(N), repeat=M))


def stationary_eig(gamma):
    """Left Perron eigenvector, normalised."""
    w, v = np.linalg.eig(np.asarray(gamma).T)
    d = np.real(v[:, np.argmin(np.abs(w - 1))])
    return d / d.sum()


def normal_dens(y, mean, sd):
    return stats.norm.pdf(y, loc=mean, scale=sd)


def product_densities(y, means, sds, M, N, single_chain=False):
    """(T, K) emission densities, NaN observations contribute a factor of 1."""
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    states = [tuple([i] * M) for i in range(N)] if single_chain else chain_tuples(M, N)
    out = np.ones((T, len(states)))
    for t in range(T):
        for k, s in enumerate(states):
            for m in range(M):
                if not math.isnan(y[t, m]):
                    out[t, k] *= normal_dens(y[t, m], means[m][s[m]], sds[m][s[m]])
    return out


def enumerate_joint(gamma, delta, dens):
    """Every state sequence (rows of ``paths``) with its joint probability Pr(path, y)."""
    T, K = dens.shape
    paths = np.array(list(itertools.product(range(K), repeat=T)), dtype=np.intp).reshape(-1, T)
    p = delta[paths[:, 0]] * dens[0, paths[:, 0]]
    for t in range(1, T):
        p = p * gamma[paths[:, t - 1], paths[:, t]] * dens[t, paths[:, t]]
    return paths, p


def enum_loglik(gamma, delta, dens):
    _, p = enumerate_joint(gamma, delta, dens)
    return math.log(math.fsum(p))


def enum_viterbi(gamma, delta, dens):
    """Most probable path; ties go to the lexicographically smallest path."""
    paths, p = enumerate_joint(gamma, delta, dens)
    i = int(np.argmax(p))  # first maximum = lexicographically smallest
    return paths[i], p[i]


def enum_posteriors(gamma, delta, dens):
    paths, p = enumerate_joint(gamma, delta, dens)
    T, K = dens.shape
    post = np.zeros((T, K))
    for t in range(T):
        post[t] = np.bincount(paths[:, t], weights=p, minlength=K)
    return post / math.fsum(p)


def scaled_forward_loglik(gamma, delta, logp):
    """Rabiner-style scaled forward pass on raw densities.

    Each row of densities is divided by its maximum (kept as a log offset)
    so the pass stays in linear space without underflow.
    """
    logp = np.asarray(logp)
    offs = logp.max(axis=1)
    dens = np.exp(logp - offs[:, None])
    alpha = delta * dens[0]
    c = alpha.sum()
    ll = math.log(c) + offs[0]
    alpha /= c
    for t in range(1, logp.shape[0]):
        alpha = (alpha @ gamma) * dens[t]
        c = alpha.sum()
        ll += math.log(c) + offs[t]
        alpha /= c
    return ll


def random_stochastic(rng, rows, n, conc=1.0):
    return rng.dirichlet(np.full(n, conc), size=rows)


def kron_all(mats):
    out = np.ones((1, 1))
    for a in mats:
        out = np.kron(out, a)
    return out


def cond_indep_tpm(marginals, M, N):
    """Explicit product over chains of Pr(s_t^m | previous vector)."""
    states = chain_tuples(M, N)
    K = len(states)
    g = np.ones((K, K))
    for i in range(K):
        for j, s in enumerate(states):
            for m in range(M):
                g[i, j] *= marginals[m][i][s[m]]
    return g


def mixture_tpm(pair_tpms, weights, M, N):
    states = chain_tuples(M, N)
    K = len(states)
    marg = np.zeros((M, K, N))
    for m in range(M):
        for i, prev in enumerate(states):
            for j in range(N):
                marg[m, i, j] = sum(weights[m][n] * pair_tpms[m][n][prev[n]][j] for n in range(M))
    return cond_indep_tpm(marg, M, N)


def oracle_tpm(kind, M, N, tr):
    """Product-space matrix rebuilt from natural blocks without library code."""
    if kind == "cartesian":
        return np.asarray(tr["gamma"])
    if kind == "single_chain":
        return np.asarray(tr["tpm"])
    if kind == "independent":
        return kron_all(tr["tpms"])
    if kind == "cond_indep":
        return cond_indep_tpm(tr["marginals"], M, N)
    return mixture_tpm(tr["pair_tpms"], tr["weights"], M, N)


def oracle_model(kind, M, N, params, y):
    """(gamma, delta, densities) for a normal-emission model."""
    gamma = oracle_tpm(kind, M, N, params.transition)
    delta = stationary_eig(gamma)
    means = [em["mean"] for em in params.emissions]
    sds = [em["sd"] for em in params.emissions]
    dens = product_densities(y, means, sds, M, N, single_chain=(kind == "single_chain"))
    return gamma, delta, dens
