# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recursions over a (T, K) log-emission matrix.

Mirrors :mod:`coupledhmm._kernels_py` function for function; the two are
checked against each other in the test suite.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _step(const double[:, ::1] logp, Py_ssize_t t, double[::1] pred,
                         double[::1] phi, Py_ssize_t K) except? -1.0:
    # phi <- normalised exp(log(pred) + logp[t]); returns log of the normaliser
    cdef Py_ssize_t j
    cdef double m = -INFINITY, v, s = 0.0
    for j in range(K):
        if pred[j] > 0.0:
            v = log(pred[j]) + logp[t, j]
        else:
            v = -INFINITY
        phi[j] = v
        if v > m:
            m = v
    if m == -INFINITY:
        raise FloatingPointError(f"zero likelihood at time index {t}")
    for j in range(K):
        phi[j] = exp(phi[j] - m)
        s += phi[j]
    for j in range(K):
        phi[j] /= s
    return m + log(s)


def forward_loglik(const double[:, ::1] logp, const double[:, ::1] gamma,
                   const double[::1] delta):
    """Log-likelihood via the normalised forward recursion."""
    cdef Py_ssize_t T = logp.shape[0], K = logp.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double ll = 0.0, a
    cdef double[::1] phi = np.empty(K)
    cdef double[::1] pred = np.empty(K)
    if T == 0:
        return 0.0
    for j in range(K):
        pred[j] = delta[j]
    ll += _step(logp, 0, pred, phi, K)
    for t in range(1, T):
        for j in range(K):
            pred[j] = 0.0
        for i in range(K):
            a = phi[i]
            if a == 0.0:
                continue
            for j in range(K):
                pred[j] += a * gamma[i, j]
        ll += _step(logp, t, pred, phi, K)
    return ll


def forward_backward(const double[:, ::1] logp, const double[:, ::1] gamma,
                     const double[::1] delta):
    """Smoothed posteriors plus gradients of the log-likelihood.

    Returns ``(loglik, posteriors, d_gamma, d_delta)`` where ``d_gamma[i, j]``
    is the partial derivative w.r.t. ``gamma[i, j]`` and ``d_delta`` the one
    w.r.t. the initial distribution. The partial w.r.t. ``logp[t, k]`` is
    ``posteriors[t, k]``.
    """
    cdef Py_ssize_t T = logp.shape[0], K = logp.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double ll = 0.0, a, s
    phi_arr = np.empty((T, K))
    post_arr = np.empty((T, K))
    dg_arr = np.zeros((K, K))
    dd_arr = np.empty(K)
    cdef double[:, ::1] phi = phi_arr
    cdef double[:, ::1] post = post_arr
    cdef double[:, ::1] dg = dg_arr
    cdef double[::1] dd = dd_arr
    cdef double[::1] c = np.empty(T)
    cdef double[::1] pred = np.empty(K)
    cdef double[::1] beta = np.ones(K)
    cdef double[::1] rb = np.empty(K)
    if T == 0:
        return 0.0, post_arr, dg_arr, np.zeros(K)

    for j in range(K):
        pred[j] = delta[j]
    c[0] = _step(logp, 0, pred, phi[0], K)
    for t in range(1, T):
        for j in range(K):
            pred[j] = 0.0
        for i in range(K):
            a = phi[t - 1, i]
            if a == 0.0:
                continue
            for j in range(K):
                pred[j] += a * gamma[i, j]
        c[t] = _step(logp, t, pred, phi[t], K)
    for t in range(T):
        ll += c[t]

    for t in range(T - 1, -1, -1):
        for j in range(K):
            post[t, j] = phi[t, j] * beta[j]
            rb[j] = exp(logp[t, j] - c[t]) * beta[j]
        if t == 0:
            for j in range(K):
                dd[j] = rb[j]
            break
        for i in range(K):
            a = phi[t - 1, i]
            s = 0.0
            for j in range(K):
                dg[i, j] += a * rb[j]
                s += gamma[i, j] * rb[j]
            beta[i] = s
    return ll, post_arr, dg_arr, dd_arr


def viterbi(const double[:, ::1] logp, const double[:, ::1] log_gamma,
            const double[::1] log_delta):
    """Most probable state path; ties resolve to the lower state index."""
    cdef Py_ssize_t T = logp.shape[0], K = logp.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double best, v
    path_arr = np.zeros(T, dtype=np.intp)
    if T == 0:
        return path_arr, -INFINITY
    cdef Py_ssize_t[::1] path = path_arr
    cdef Py_ssize_t[:, ::1] back = np.zeros((T, K), dtype=np.intp)
    cdef double[::1] prev = np.empty(K)
    cdef double[::1] cur = np.empty(K)
    for j in range(K):
        prev[j] = log_delta[j] + logp[0, j]
    for t in range(1, T):
        for j in range(K):
            best = -INFINITY
            best_i = 0
            for i in range(K):
                v = prev[i] + log_gamma[i, j]
                if v > best:
                    best = v
                    best_i = i
            cur[j] = best + logp[t, j]
            back[t, j] = best_i
        for j in range(K):
            prev[j] = cur[j]
    best = -INFINITY
    best_i = 0
    for j in range(K):
        if prev[j] > best:
            best = prev[j]
            best_i = j
    if best == -INFINITY:
        raise FloatingPointError("every state path has zero probability")
    path[T - 1] = best_i
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr, best
