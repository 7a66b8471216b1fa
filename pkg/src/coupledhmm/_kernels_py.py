"""Pure numpy versions of the recursions in ``_kernels.pyx``."""

import numpy as np


def _step(lp_row, pred, t):
    with np.errstate(divide="ignore"):
        v = np.log(pred) + lp_row
    m = v.max()
    if m == -np.inf:
        raise FloatingPointError(f"zero likelihood at time index {t}")
    e = np.exp(v - m)
    s = e.sum()
    return e / s, m + np.log(s)


def forward_loglik(logp, gamma, delta):
    """Log-likelihood via the normalised forward recursion."""
    T = logp.shape[0]
    if T == 0:
        return 0.0
    phi, ll = _step(logp[0], delta, 0)
    for t in range(1, T):
        phi, c = _step(logp[t], phi @ gamma, t)
        ll += c
    return float(ll)


def forward_backward(logp, gamma, delta):
    """Smoothed posteriors plus gradients of the log-likelihood.

    See the compiled kernel for the meaning of the returned tuple.
    """
    T, K = logp.shape
    post = np.empty((T, K))
    dg = np.zeros((K, K))
    if T == 0:
        return 0.0, post, dg, np.zeros(K)
    phi = np.empty((T, K))
    c = np.empty(T)
    phi[0], c[0] = _step(logp[0], delta, 0)
    for t in range(1, T):
        phi[t], c[t] = _step(logp[t], phi[t - 1] @ gamma, t)

    beta = np.ones(K)
    for t in range(T - 1, 0, -1):
        post[t] = phi[t] * beta
        rb = np.exp(logp[t] - c[t]) * beta
        dg += np.outer(phi[t - 1], rb)
        beta = gamma @ rb
    post[0] = phi[0] * beta
    dd = np.exp(logp[0] - c[0]) * beta
    return float(c.sum()), post, dg, dd


def viterbi(logp, log_gamma, log_delta):
    """Most probable state path; ties resolve to the lower state index."""
    T, K = logp.shape
    path = np.zeros(T, dtype=np.intp)
    if T == 0:
        return path, -np.inf
    back = np.zeros((T, K), dtype=np.intp)
    prev = log_delta + logp[0]
    for t in range(1, T):
        scores = prev[:, None] + log_gamma
        # argmax returns the first maximum, i.e. the lowest index
        back[t] = scores.argmax(axis=0)
        prev = scores[back[t], np.arange(K)] + logp[t]
    best_j = int(prev.argmax())
    best = float(prev[best_j])
    if best == -np.inf:
        raise FloatingPointError("every state path has zero probability")
    path[-1] = best_j
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best
