"""Global (Viterbi) and local (posterior) state decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .emissions import DataError, ObservationSet
from .inference import _natural, _prepare
from .model import ModelSpec


class DecodingError(ValueError):
    """Model and data admit no state path of positive probability."""


@dataclass(frozen=True)
class StatePath:
    """Decoded path. ``global_path`` holds 0-based model-state indices and
    ``per_chain`` the 1-based chain states (T x M)."""

    global_path: np.ndarray
    per_chain: np.ndarray
    posteriors: np.ndarray | None = None

    @property
    def max_posterior(self):
        if self.posteriors is None:
            return None
        return self.posteriors[np.arange(len(self.global_path)), self.global_path]


def chain_states(spec: ModelSpec, path) -> np.ndarray:
    """Per-chain 1-based states for a path of model-state indices."""
    return spec.state_map[np.asarray(path, dtype=np.intp)] + 1


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def viterbi(spec: ModelSpec, params, data: ObservationSet) -> StatePath:
    params = _natural(spec, params)
    gamma, delta, logp, _ = _prepare(spec, params, data)
    try:
        path, _ = kernels.viterbi(logp, _log(gamma), _log(delta))
    except FloatingPointError as exc:
        raise DecodingError(str(exc)) from None
    return StatePath(path, chain_states(spec, path))


def path_log_probability(spec: ModelSpec, params, data: ObservationSet, path) -> float:
    """Joint log-probability of a model-state path and the observations."""
    params = _natural(spec, params)
    gamma, delta, logp, _ = _prepare(spec, params, data)
    path = np.asarray(path, dtype=np.intp)
    lg = _log(gamma)
    return float(_log(delta[path[0]]) + logp[np.arange(len(path)), path].sum() + lg[path[:-1], path[1:]].sum())


def local_decode(spec: ModelSpec, params, data: ObservationSet) -> StatePath:
    """Smoothed probabilities Pr(S_t = k | y_1..y_T) and their per-t argmax."""
    params = _natural(spec, params)
    gamma, delta, logp, _ = _prepare(spec, params, data)
    try:
        _, post, _, _ = kernels.forward_backward(logp, gamma, delta)
    except FloatingPointError as exc:
        raise DecodingError(str(exc)) from None
    path = post.argmax(axis=1)
    return StatePath(path, chain_states(spec, path), post)


def chain_posteriors(spec: ModelSpec, posteriors) -> list:
    """Per-chain (T, N) marginal posteriors from product-state posteriors."""
    S = spec.state_map
    return [
        np.stack([posteriors[:, S[:, m] == i].sum(axis=1) for i in range(spec.states_per_chain)], axis=1)
        for m in range(spec.num_chains)
    ]


def decoding_error(decoded, truth) -> float:
    """Percentage of chain-state entries that differ."""
    decoded = np.asarray(decoded)
    truth = np.asarray(truth)
    if decoded.shape != truth.shape:
        raise ValueError(f"shape mismatch: {decoded.shape} vs {truth.shape}")
    if decoded.size == 0:
        return 0.0
    return 100.0 * float(np.mean(decoded != truth))


def joint_decoding_error(decoded, truth) -> float:
    """Percentage of time steps whose decoded state vector is wrong in any chain."""
    decoded = np.asarray(decoded)
    truth = np.asarray(truth)
    if decoded.shape != truth.shape:
        raise ValueError(f"shape mismatch: {decoded.shape} vs {truth.shape}")
    if decoded.size == 0:
        return 0.0
    wrong = decoded != truth
    if wrong.ndim == 2:
        wrong = wrong.any(axis=1)
    return 100.0 * float(np.mean(wrong))


def disagreement_intervals(per_chain):
    """Time indices where not all chains share one state, and their fraction."""
    per_chain = np.asarray(per_chain)
    if per_chain.ndim != 2 or per_chain.shape[1] < 2:
        raise DataError("disagreement needs at least two chains")
    differ = np.any(per_chain != per_chain[:, :1], axis=1)
    idx = np.flatnonzero(differ)
    frac = float(differ.mean()) if len(differ) else 0.0
    return idx, frac
