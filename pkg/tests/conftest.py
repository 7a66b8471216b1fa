import numpy as np
import pytest

from coupledhmm.model import ModelSpec, Params
from oracles import random_stochastic


def random_params(rng, kind, M, N, conc=2.0):
    """Random natural parameters for normal emissions under ``kind``."""
    K = N**M
    if kind == "cartesian":
        tr = {"gamma": random_stochastic(rng, K, K, conc)}
    elif kind == "single_chain":
        tr = {"tpm": random_stochastic(rng, N, N, conc)}
    elif kind == "independent":
        tr = {"tpms": np.stack([random_stochastic(rng, N, N, conc) for _ in range(M)])}
    elif kind == "cond_indep":
        tr = {"marginals": np.stack([random_stochastic(rng, K, N, conc) for _ in range(M)])}
    elif kind == "mixture_weight":
        tr = {
            "pair_tpms": rng.dirichlet(np.full(N, conc), size=(M, M, N)),
            "weights": random_stochastic(rng, M, M, conc),
        }
    else:
        raise ValueError(kind)
    em = [{"mean": np.sort(rng.normal(0, 2, N)), "sd": rng.uniform(0.5, 2.0, N)} for _ in range(M)]
    return ModelSpec(kind, M, N, "normal"), Params(tr, em)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
