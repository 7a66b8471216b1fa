"""Backend selection for the forward/backward/Viterbi recursions.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Setting ``COUPLEDHMM_PURE_PYTHON=1`` forces the
fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("COUPLEDHMM_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def forward_loglik(logp, gamma, delta):
    return float(_impl.forward_loglik(_c(logp), _c(gamma), _c(delta)))


def forward_backward(logp, gamma, delta):
    return _impl.forward_backward(_c(logp), _c(gamma), _c(delta))


def viterbi(logp, log_gamma, log_delta):
    path, best = _impl.viterbi(_c(logp), _c(log_gamma), _c(log_delta))
    return np.asarray(path, dtype=np.intp), float(best)


def backend_module(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _kernels_py
    from . import _kernels

    return _kernels
