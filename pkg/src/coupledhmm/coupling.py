"""Transition structures for coupled state processes.

Every coupling kind is turned into one transition matrix over the product
state space, so the standard HMM recursions apply unchanged. The kinds are

``cartesian``
    unrestricted K x K matrix over state vectors.
``cond_indep``
    chains move independently given the previous state vector; one
    N-point distribution per (chain, previous state vector).
``mixture_weight``
    as ``cond_indep`` but each chain's next-state law is a weighted mixture
    of chain-to-chain laws ``Pr(S_t^(m) | S_{t-1}^(n))``.
``independent``
    Kronecker product of per-chain matrices.
``single_chain``
    one N-state chain read by every observation stream (K = N).
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .states import (
    StateSpace,
    rows_backprop,
    rows_to_working,
    validate_tpm,
    working_to_rows,
)


class CouplingKind(str, Enum):
    CARTESIAN = "cartesian"
    COND_INDEP = "cond_indep"
    MIXTURE_WEIGHT = "mixture_weight"
    INDEPENDENT = "independent"
    SINGLE_CHAIN = "single_chain"


_ALIASES = {
    "cartesianfull": CouplingKind.CARTESIAN,
    "chmm": CouplingKind.CARTESIAN,
    "condindep": CouplingKind.COND_INDEP,
    "mixtureweight": CouplingKind.MIXTURE_WEIGHT,
    "independentchains": CouplingKind.INDEPENDENT,
    "singlechain": CouplingKind.SINGLE_CHAIN,
}


def as_kind(kind) -> CouplingKind:
    if isinstance(kind, CouplingKind):
        return kind
    key = str(kind).strip().lower()
    try:
        return CouplingKind(key)
    except ValueError:
        pass
    key = key.replace("_", "").replace("-", "")
    if key in _ALIASES:
        return _ALIASES[key]
    raise ValueError(f"unknown coupling kind {kind!r}")


def count_parameters(kind, space: StateSpace) -> int:
    """Free transition parameters after the sum-to-one constraints."""
    kind = as_kind(kind)
    M, N = space.num_chains, space.states_per_chain
    K = space.product_dim
    if kind is CouplingKind.CARTESIAN:
        return K * (K - 1)
    if kind is CouplingKind.COND_INDEP:
        return M * K * (N - 1)
    if kind is CouplingKind.MIXTURE_WEIGHT:
        return M * M * N * (N - 1) + M * (M - 1)
    if kind is CouplingKind.INDEPENDENT:
        return M * N * (N - 1)
    return N * (N - 1)


def _one_hot(idx, n):
    out = np.zeros((len(idx), n))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def build_cartesian(gamma) -> np.ndarray:
    return validate_tpm(gamma).copy()


def build_single_chain(tpm) -> np.ndarray:
    return validate_tpm(tpm).copy()


def build_independent(tpms) -> np.ndarray:
    """Kronecker product of the per-chain matrices, chain 1 outermost."""
    tpms = [validate_tpm(a, "per-chain matrix") for a in tpms]
    if len({a.shape for a in tpms}) != 1:
        raise ValueError("per-chain matrices must share one shape")
    out = np.ones((1, 1))
    for a in tpms:
        out = np.kron(out, a)
    return out


def _marginal_factors(marginals, chain_states):
    # F[m][a, b] = marginals[m, a, s_m(b)]
    return [marginals[m][:, chain_states[:, m]] for m in range(marginals.shape[0])]


def build_cond_indep(marginals) -> np.ndarray:
    """Product over chains of ``Pr(S_t^(m) | S_{t-1})``.

    ``marginals`` has shape (M, K, N) with K = N**M; entry ``[m, a, j]`` is
    the probability that chain m moves to state j from product state a.
    """
    marginals = np.asarray(marginals, dtype=float)
    M, K, N = marginals.shape
    if N**M != K:
        raise ValueError(f"marginals shape {marginals.shape} inconsistent with K = N**M")
    if np.any(marginals < 0) or np.max(np.abs(marginals.sum(axis=2) - 1)) > 1e-9:
        raise ValueError("each conditional distribution must be a probability vector")
    S = StateSpace(M, N).chain_states
    # mixtures can round a certain transition to 1 + eps
    return np.minimum(np.prod(_marginal_factors(marginals, S), axis=0), 1.0)


def mixture_marginals(pair_tpms, weights) -> np.ndarray:
    """(M, K, N) marginals implied by chain-to-chain laws and mixture weights."""
    pair_tpms = np.asarray(pair_tpms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    M, _, N, _ = pair_tpms.shape
    S = StateSpace(M, N).chain_states
    out = np.zeros((M, N**M, N))
    for m in range(M):
        for n in range(M):
            out[m] += weights[m, n] * pair_tpms[m, n][S[:, n]]
    return out


def build_mixture_weight(pair_tpms, weights) -> np.ndarray:
    """Mixture-weight coupling.

    ``pair_tpms[m, n]`` is the N x N law of chain m's next state given chain
    n's previous state; ``weights[m, n]`` the weight of chain n on chain m.
    """
    pair_tpms = np.asarray(pair_tpms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    M = weights.shape[0]
    if pair_tpms.ndim != 4 or pair_tpms.shape[:2] != (M, M) or weights.shape != (M, M):
        raise ValueError("pair_tpms must be (M, M, N, N) and weights (M, M)")
    for m in range(M):
        for n in range(M):
            validate_tpm(pair_tpms[m, n], "chain-to-chain matrix")
    if np.any(weights < 0) or np.max(np.abs(weights.sum(axis=1) - 1)) > 1e-9:
        raise ValueError("mixture weights must be non-negative and sum to 1 per chain")
    return build_cond_indep(mixture_marginals(pair_tpms, weights))


class Coupling:
    """Parameter handling for one coupling kind on a given state space.

    Natural transition parameters are dicts of arrays; the working vector
    is the concatenation of row-wise logits.
    """

    def __init__(self, kind, space: StateSpace):
        self.kind = as_kind(kind)
        self.space = space
        M, N = space.num_chains, space.states_per_chain
        self.M, self.N = M, N
        if self.kind is CouplingKind.SINGLE_CHAIN:
            self.K = N
            self.state_map = np.repeat(np.arange(N)[:, None], M, axis=1)
        else:
            self.K = space.product_dim
            self.state_map = space.chain_states
        self._onehots = [_one_hot(self.state_map[:, m], N) for m in range(M)]

    @property
    def n_working(self) -> int:
        return count_parameters(self.kind, self.space)

    # -- natural <-> matrix -------------------------------------------------

    def tpm(self, nat) -> np.ndarray:
        kind = self.kind
        if kind is CouplingKind.CARTESIAN:
            return np.array(nat["gamma"], dtype=float)
        if kind is CouplingKind.SINGLE_CHAIN:
            return np.array(nat["tpm"], dtype=float)
        if kind is CouplingKind.INDEPENDENT:
            out = np.ones((1, 1))
            for a in nat["tpms"]:
                out = np.kron(out, a)
            return out
        return np.minimum(np.prod(_marginal_factors(self.marginals(nat), self.state_map), axis=0), 1.0)

    def marginals(self, nat) -> np.ndarray:
        if self.kind is CouplingKind.COND_INDEP:
            return np.asarray(nat["marginals"], dtype=float)
        if self.kind is CouplingKind.MIXTURE_WEIGHT:
            return mixture_marginals(nat["pair_tpms"], nat["weights"])
        raise TypeError(f"{self.kind.value} has no marginal representation")

    def validate(self, nat):
        """Check natural parameters by building through the public builders."""
        kind = self.kind
        if kind is CouplingKind.CARTESIAN:
            g = build_cartesian(nat["gamma"])
        elif kind is CouplingKind.SINGLE_CHAIN:
            g = build_single_chain(nat["tpm"])
        elif kind is CouplingKind.INDEPENDENT:
            g = build_independent(nat["tpms"])
        elif kind is CouplingKind.COND_INDEP:
            g = build_cond_indep(nat["marginals"])
        else:
            g = build_mixture_weight(nat["pair_tpms"], nat["weights"])
        if g.shape != (self.K, self.K):
            raise ValueError(f"transition parameters give a {g.shape} matrix, expected K={self.K}")

    # -- working transform ----------------------------------------------------

    def _blocks(self):
        """(name, shape, reference columns) for each row-softmax block."""
        M, N, K = self.M, self.N, self.K
        kind = self.kind
        if kind is CouplingKind.CARTESIAN:
            return [("gamma", (K, K), np.arange(K))]
        if kind is CouplingKind.SINGLE_CHAIN:
            return [("tpm", (N, N), np.arange(N))]
        if kind is CouplingKind.INDEPENDENT:
            return [("tpms", (M, N, N), np.tile(np.arange(N), M))]
        if kind is CouplingKind.COND_INDEP:
            return [("marginals", (M, K, N), self.state_map.T.ravel())]
        return [
            ("pair_tpms", (M, M, N, N), np.tile(np.arange(N), M * M)),
            ("weights", (M, M), np.arange(M)),
        ]

    def to_working(self, nat) -> np.ndarray:
        parts = []
        for name, shape, ref in self._blocks():
            if shape[-1] == 1:
                continue
            rows = np.asarray(nat[name], dtype=float).reshape(-1, shape[-1])
            parts.append(rows_to_working(rows, ref).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def from_working(self, theta) -> dict:
        nat, pos = {}, 0
        for name, shape, ref in self._blocks():
            n = shape[-1]
            rows = int(np.prod(shape[:-1]))
            if n == 1:
                nat[name] = np.ones(shape)
                continue
            size = rows * (n - 1)
            nat[name] = working_to_rows(theta[pos : pos + size], ref, n).reshape(shape)
            pos += size
        return nat

    def backprop(self, nat, d_gamma) -> np.ndarray:
        """Gradient w.r.t. the working vector given d(objective)/d(tpm)."""
        grads = self._natural_grads(nat, d_gamma)
        parts = []
        for name, shape, ref in self._blocks():
            n = shape[-1]
            if n == 1:
                continue
            probs = np.asarray(nat[name], dtype=float).reshape(-1, n)
            parts.append(rows_backprop(probs, grads[name].reshape(-1, n), ref).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def _natural_grads(self, nat, d_gamma) -> dict:
        kind = self.kind
        if kind is CouplingKind.CARTESIAN:
            return {"gamma": d_gamma}
        if kind is CouplingKind.SINGLE_CHAIN:
            return {"tpm": d_gamma}
        E = self._onehots
        if kind is CouplingKind.INDEPENDENT:
            P = np.stack([np.asarray(a)[self.state_map[:, m]] for m, a in enumerate(nat["tpms"])])
            dP = self._marginal_backprop(P, d_gamma)
            return {"tpms": np.stack([E[m].T @ dP[m] for m in range(self.M)])}
        P = self.marginals(nat)
        dP = self._marginal_backprop(P, d_gamma)
        if kind is CouplingKind.COND_INDEP:
            return {"marginals": dP}
        Q = np.asarray(nat["pair_tpms"], dtype=float)
        w = np.asarray(nat["weights"], dtype=float)
        dQ = np.empty_like(Q)
        dw = np.empty_like(w)
        for m in range(self.M):
            for n in range(self.M):
                dQ[m, n] = w[m, n] * (E[n].T @ dP[m])
                dw[m, n] = np.sum(dP[m] * (E[n] @ Q[m, n]))
        return {"pair_tpms": dQ, "weights": dw}

    def _marginal_backprop(self, P, d_gamma):
        F = _marginal_factors(P, self.state_map)
        dP = np.empty_like(P)
        for m in range(self.M):
            others = np.ones_like(d_gamma)
            for k in range(self.M):
                if k != m:
                    others = others * F[k]
            dP[m] = (d_gamma * others) @ self._onehots[m]
        return dP

    # -- labels, starts, reporting ------------------------------------------

    def relabel(self, nat, perms) -> dict:
        """Reorder states; ``perms[m][new] = old`` for each chain."""
        kind = self.kind
        if kind is CouplingKind.SINGLE_CHAIN:
            p = perms[0]
            return {"tpm": np.asarray(nat["tpm"])[np.ix_(p, p)]}
        if kind is CouplingKind.INDEPENDENT:
            return {"tpms": np.stack([np.asarray(a)[np.ix_(p, p)] for a, p in zip(nat["tpms"], perms)])}
        S = self.state_map
        old_states = np.stack([np.asarray(perms[m])[S[:, m]] for m in range(self.M)], axis=1)
        P = old_states @ (self.N ** np.arange(self.M - 1, -1, -1))
        if kind is CouplingKind.CARTESIAN:
            return {"gamma": np.asarray(nat["gamma"])[np.ix_(P, P)]}
        if kind is CouplingKind.COND_INDEP:
            marg = np.asarray(nat["marginals"])
            return {"marginals": np.stack([marg[m][np.ix_(P, perms[m])] for m in range(self.M)])}
        Q = np.asarray(nat["pair_tpms"])
        newQ = np.empty_like(Q)
        for m in range(self.M):
            for n in range(self.M):
                newQ[m, n] = Q[m, n][np.ix_(perms[n], perms[m])]
        return {"pair_tpms": newQ, "weights": np.array(nat["weights"])}

    def random_start(self, rng) -> dict:
        """Diagonal mass Uniform(0.7, 0.95), remainder split at random."""
        nat = {}
        for name, shape, ref in self._blocks():
            n = shape[-1]
            rows = int(np.prod(shape[:-1]))
            nat[name] = _random_rows(rng, rows, n, np.broadcast_to(ref, (rows,))).reshape(shape)
        return nat

    def natural_vector(self, nat):
        """Flattened natural transition parameters with labels (1-based)."""
        values, names = [], []
        for name, shape, _ in self._blocks():
            arr = np.asarray(nat[name], dtype=float).reshape(shape)
            for idx in np.ndindex(*shape):
                values.append(arr[idx])
                names.append(f"{name}[{','.join(str(i + 1) for i in idx)}]")
        return np.array(values), names

    def off_diagonal_weights(self, nat):
        if self.kind is not CouplingKind.MIXTURE_WEIGHT:
            return np.zeros(0)
        w = np.asarray(nat["weights"])
        return w[~np.eye(self.M, dtype=bool)]


def _random_rows(rng, rows, n, ref):
    out = np.empty((rows, n))
    for r in range(rows):
        if n == 1:
            out[r] = 1.0
            continue
        d = rng.uniform(0.7, 0.95)
        off = rng.uniform(size=n - 1)
        off = (1 - d) * off / off.sum()
        out[r] = np.insert(off, ref[r], d)
    return out
