"""State spaces, transition matrices and their unconstrained parameterisation.

Product states are indexed 0..K-1 internally using a mixed-radix code with
chain 1 as the most significant digit; chain states are 1-based wherever a
user sees them, so for two 2-state chains the order is
(1,1), (1,2), (2,1), (2,2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

PROB_FLOOR = 1e-12
ROW_SUM_TOL = 1e-12


class NonUniqueStationaryError(ValueError):
    """The chain has no unique stationary distribution."""


@dataclass(frozen=True)
class StateSpace:
    """``num_chains`` chains with ``states_per_chain`` states each."""

    num_chains: int
    states_per_chain: int

    def __post_init__(self):
        if self.num_chains < 1 or self.states_per_chain < 1:
            raise ValueError("need at least one chain and one state per chain")

    @property
    def product_dim(self) -> int:
        return self.states_per_chain**self.num_chains

    @cached_property
    def chain_states(self) -> np.ndarray:
        """(K, M) array of 0-based chain states for every product state."""
        return decode_all(self.num_chains, self.states_per_chain)

    def encode(self, chain_states) -> int:
        return encode_product_state(chain_states, self)

    def decode(self, index: int) -> tuple[int, ...]:
        return decode_product_state(index, self)


def decode_all(num_chains: int, states_per_chain: int) -> np.ndarray:
    K = states_per_chain**num_chains
    idx = np.arange(K)
    out = np.empty((K, num_chains), dtype=np.intp)
    for m in range(num_chains - 1, -1, -1):
        out[:, m] = idx % states_per_chain
        idx = idx // states_per_chain
    return out


def encode_product_state(chain_states, space: StateSpace) -> int:
    """Map 1-based chain states ``(s1, ..., sM)`` to a 0-based product index."""
    states = [int(s) for s in chain_states]
    if len(states) != space.num_chains:
        raise ValueError(f"expected {space.num_chains} chain states, got {len(states)}")
    index = 0
    for s in states:
        if not 1 <= s <= space.states_per_chain:
            raise ValueError(f"chain state {s} outside 1..{space.states_per_chain}")
        index = index * space.states_per_chain + (s - 1)
    return index


def decode_product_state(index: int, space: StateSpace) -> tuple[int, ...]:
    """Inverse of :func:`encode_product_state`; returns 1-based chain states."""
    if not 0 <= index < space.product_dim:
        raise ValueError(f"product index {index} outside 0..{space.product_dim - 1}")
    return tuple(int(s) + 1 for s in space.chain_states[index])


def validate_tpm(tpm, name="transition matrix") -> np.ndarray:
    tpm = np.asarray(tpm, dtype=float)
    if tpm.ndim != 2 or tpm.shape[0] != tpm.shape[1]:
        raise ValueError(f"{name} must be square, got shape {tpm.shape}")
    if np.any(tpm < 0) or np.any(tpm > 1) or not np.all(np.isfinite(tpm)):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if np.max(np.abs(tpm.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError(f"{name} rows must sum to 1")
    return tpm


def stationary_distribution(tpm) -> np.ndarray:
    """Solve ``delta @ tpm = delta`` with ``sum(delta) = 1``.

    The last balance equation is replaced by the normalisation constraint.
    Raises :class:`NonUniqueStationaryError` when the system is singular.
    """
    tpm = np.asarray(tpm, dtype=float)
    K = tpm.shape[0]
    A = tpm.T - np.eye(K)
    A[-1, :] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    # a reducible chain gives a (near-)singular system
    if K > 1 and np.linalg.cond(A) > 1e12:
        raise NonUniqueStationaryError("stationary distribution is not unique")
    delta = np.linalg.solve(A, b)
    delta = np.clip(delta, 0.0, None)
    return delta / delta.sum()


def rows_to_working(probs, ref) -> np.ndarray:
    """Multinomial logit of each row against the column ``ref[r]``.

    Returns an array of shape (rows, n-1) with the reference column dropped.
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < PROB_FLOOR):
        warnings.warn("probabilities below 1e-12 clamped before log transform", RuntimeWarning)
        probs = np.maximum(probs, PROB_FLOOR)
        probs = probs / probs.sum(axis=1, keepdims=True)
    rows, n = probs.shape
    ref = np.broadcast_to(np.asarray(ref, dtype=np.intp), (rows,))
    logs = np.log(probs) - np.log(probs[np.arange(rows), ref])[:, None]
    mask = np.ones((rows, n), dtype=bool)
    mask[np.arange(rows), ref] = False
    return logs[mask].reshape(rows, n - 1)


def working_to_rows(eta, ref, n) -> np.ndarray:
    """Inverse of :func:`rows_to_working`."""
    eta = np.asarray(eta, dtype=float).reshape(-1, n - 1)
    rows = eta.shape[0]
    ref = np.broadcast_to(np.asarray(ref, dtype=np.intp), (rows,))
    full = np.zeros((rows, n))
    mask = np.ones((rows, n), dtype=bool)
    mask[np.arange(rows), ref] = False
    full[mask] = eta.ravel()
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)


def rows_backprop(probs, grad, ref) -> np.ndarray:
    """Chain rule through :func:`working_to_rows`.

    ``grad`` is d(objective)/d(probs); returns the gradient w.r.t. the
    working values in the layout of :func:`rows_to_working`.
    """
    rows, n = probs.shape
    ref = np.broadcast_to(np.asarray(ref, dtype=np.intp), (rows,))
    g = probs * (grad - (probs * grad).sum(axis=1, keepdims=True))
    mask = np.ones((rows, n), dtype=bool)
    mask[np.arange(rows), ref] = False
    return g[mask].reshape(rows, n - 1)


def tpm_to_working(tpm) -> np.ndarray:
    """Row-wise logit with the diagonal entry as reference; flat vector."""
    tpm = np.asarray(tpm, dtype=float)
    K = tpm.shape[0]
    if K == 1:
        return np.zeros(0)
    return rows_to_working(tpm, np.arange(K)).ravel()


def working_to_tpm(values, K) -> np.ndarray:
    if K == 1:
        return np.ones((1, 1))
    return working_to_rows(values, np.arange(K), K)


def stationary_gradient(tpm, delta, d_delta) -> np.ndarray:
    """Pull a gradient w.r.t. the stationary vector back onto the TPM.

    Uses d(delta) = delta d(Gamma) Z with Z = (I - Gamma + 1 delta)^-1.
    """
    K = tpm.shape[0]
    Z = np.linalg.inv(np.eye(K) - tpm + np.outer(np.ones(K), delta))
    return np.outer(delta, Z @ d_delta)
