"""Likelihood evaluation, maximum likelihood fitting and model comparison."""

from __future__ import annotations

import hashlib
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from .coupling import CouplingKind, count_parameters
from .emissions import DataError, ObservationSet
from .model import ModelSpec, Params, WorkingParameters
from .states import NonUniqueStationaryError, stationary_distribution, stationary_gradient

log = logging.getLogger(__name__)

DEGENERATE_WEIGHT = 1e-6


class NumericalError(ArithmeticError):
    """Non-finite quantities in the likelihood or a failed optimisation."""


class FitError(NumericalError):
    def __init__(self, message, restarts):
        super().__init__(message)
        self.restarts = restarts


def _natural(spec: ModelSpec, params) -> Params:
    if isinstance(params, WorkingParameters):
        return spec.from_working(params)
    return params


def _prepare(spec, params, data):
    gamma = spec.tpm(params)
    delta = stationary_distribution(gamma)
    logp, per_chain = spec.log_emissions(params, data, chain_level=True)
    if np.isnan(logp).any() or np.isposinf(logp).any():
        raise NumericalError("non-finite emission log-density")
    return gamma, delta, logp, per_chain


def _all_neg_inf_check(logp):
    dead = np.all(logp == -np.inf, axis=1)
    if dead.any():
        t = int(np.argmax(dead))
        raise DataError(f"no state can emit the observation at time index {t}")


def log_likelihood(spec: ModelSpec, params, data: ObservationSet) -> float:
    """Log of delta P1 Gamma P2 ... Gamma PT 1' with delta stationary."""
    params = _natural(spec, params)
    gamma, delta, logp, _ = _prepare(spec, params, data)
    _all_neg_inf_check(logp)
    try:
        return kernels.forward_loglik(logp, gamma, delta)
    except FloatingPointError:
        return -np.inf


def loglik_and_gradient(spec: ModelSpec, working: WorkingParameters, data: ObservationSet):
    """Log-likelihood and its exact gradient w.r.t. the working vector."""
    params = spec.from_working(working)
    gamma, delta, logp, _ = _prepare(spec, params, data)
    ll, post, d_gamma, d_delta = kernels.forward_backward(logp, gamma, delta)
    d_gamma = d_gamma + stationary_gradient(gamma, delta, d_delta)
    grads = [spec.transitions.backprop(params.transition, d_gamma)]
    S = spec.state_map
    N = spec.states_per_chain
    for m in range(spec.num_chains):
        y, obs = data.column(m)
        weights = np.zeros((data.T, N))
        for i in range(N):
            weights[:, i] = post[:, S[:, m] == i].sum(axis=1)
        weights[~obs] = 0.0
        grads.append(spec.family(m).score(params.emissions[m], y, data.covariates[m], weights))
    return float(ll), np.concatenate(grads)


def data_fingerprint(data: ObservationSet) -> str:
    h = hashlib.sha1(np.ascontiguousarray(np.nan_to_num(data.y, nan=-9.99e300)).tobytes())
    for x in data.covariates:
        if x is not None:
            h.update(np.ascontiguousarray(x).tobytes())
    return h.hexdigest()[:16]


# -- fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 10
    seed: int = 0
    tolerance: float = 1e-6
    max_iter: int = 2000
    n_jobs: int = 1
    rel_tolerance: float = 1e-9


@dataclass
class RestartRecord:
    seed: int
    loglik: float
    converged: bool
    n_iter: int = 0
    grad_norm: float = np.nan
    message: str = ""


@dataclass
class FitResult:
    spec: ModelSpec
    params: Params
    working: WorkingParameters
    loglik: float
    aic: float
    restarts: list
    std_errors: np.ndarray | None = None
    natural_names: list = field(default_factory=list)
    data_id: str = ""
    n_obs: int = 0
    options: FitOptions = field(default_factory=FitOptions)
    flags: dict = field(default_factory=dict)

    @property
    def n_parameters(self) -> int:
        return self.spec.n_free_parameters()

    @property
    def natural(self) -> np.ndarray:
        return self.spec.natural_vector(self.params)[0]

    @property
    def tpm(self) -> np.ndarray:
        return self.spec.tpm(self.params)

    @property
    def stationary(self) -> np.ndarray:
        return stationary_distribution(self.tpm)


def aic(result: FitResult) -> float:
    return -2.0 * result.loglik + 2.0 * result.n_parameters


def compare_models(results) -> list:
    """Rank fits on one dataset by ascending AIC.

    Returns ``(rank, coupling, loglik, n_parameters, aic)`` tuples.
    """
    results = list(results)
    ids = {r.data_id for r in results}
    if len(ids) > 1:
        raise ValueError("models were fitted to different datasets")
    order = sorted(range(len(results)), key=lambda i: (aic(results[i]), i))
    return [
        (rank + 1, results[i].spec.coupling.value, results[i].loglik, results[i].n_parameters, aic(results[i]))
        for rank, i in enumerate(order)
    ]


def covariate_scaling(spec: ModelSpec, data: ObservationSet):
    """Per-chain (center, scale) for regression covariates."""
    out = []
    for m in range(spec.num_chains):
        x = data.covariates[m]
        if spec.n_covariates[m] == 0 or x is None:
            if spec.n_covariates[m]:
                raise DataError(f"chain {m + 1} needs {spec.n_covariates[m]} covariates")
            out.append({})
            continue
        if x.shape[1] != spec.n_covariates[m]:
            raise DataError(f"chain {m + 1}: expected {spec.n_covariates[m]} covariates, got {x.shape[1]}")
        sd = x.std(axis=0)
        out.append({"center": x.mean(axis=0), "scale": np.where(sd > 0, sd, 1.0)})
    return out


def random_start(spec: ModelSpec, data: ObservationSet, rng, scaling=None) -> Params:
    transition = spec.transitions.random_start(rng)
    scaling = scaling if scaling is not None else covariate_scaling(spec, data)
    emissions = []
    for m in range(spec.num_chains):
        y = data.y[~data.mask[:, m], m]
        if y.size == 0:
            raise DataError(f"chain {m + 1} has no observations")
        x = data.covariates[m]
        em = spec.family(m).initial(y, spec.states_per_chain, rng, x=None if x is None else x[~data.mask[:, m]])
        em.update(scaling[m])
        emissions.append(em)
    return Params(transition, emissions)


def _optimise(spec, data, start: WorkingParameters, options: FitOptions, seed: int):
    history = []
    scale = max(data.T, 1)

    def fun(theta):
        try:
            ll, g = loglik_and_gradient(spec, start.with_values(theta), data)
        except (FloatingPointError, NumericalError, DataError, np.linalg.LinAlgError, ValueError):
            return np.inf, np.zeros_like(theta)
        if not np.isfinite(ll) or not np.all(np.isfinite(g)):
            return np.inf, np.zeros_like(theta)
        return -ll / scale, -g / scale

    def callback(intermediate_result):
        history.append(intermediate_result.fun)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            fun,
            start.values,
            jac=True,
            method="BFGS",
            callback=callback,
            options={"gtol": options.tolerance / scale, "maxiter": options.max_iter},
        )
    theta = res.x
    ll, g = loglik_and_gradient(spec, start.with_values(theta), data)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    rel = np.inf
    if len(history) >= 2:
        rel = abs(history[-1] - history[-2]) / max(abs(history[-1]), 1e-300)
    converged = np.isfinite(ll) and (
        gnorm <= options.tolerance
        or rel <= options.rel_tolerance
        # line search cannot improve further: the last step changed nothing
        or (res.status == 2 and gnorm <= 1e-3 * max(1.0, abs(ll)) ** 0.5)
    )
    rec = RestartRecord(seed, float(ll), bool(converged), int(res.nit), gnorm, str(res.message))
    return start.with_values(theta), rec


def _run_restart(args):
    spec, data, options, seed, init = args
    rng = np.random.default_rng(seed)
    scaling = covariate_scaling(spec, data)
    for attempt in range(25):
        if init is not None and attempt == 0:
            params = init.copy()
            for m, sc in enumerate(scaling):
                for k, v in sc.items():
                    params.emissions[m].setdefault(k, v)
        else:
            params = random_start(spec, data, rng, scaling)
        try:
            ll0 = log_likelihood(spec, params, data)
        except (DataError, NumericalError, NonUniqueStationaryError):
            ll0 = -np.inf
        if np.isfinite(ll0):
            break
    else:
        return None, RestartRecord(seed, -np.inf, False, 0, np.nan, "no finite starting point")
    working, rec = _optimise(spec, data, spec.to_working(params), options, seed)
    return working, rec


def fit(spec: ModelSpec, data: ObservationSet, options: FitOptions | None = None, init: Params | None = None,
        **kw) -> FitResult:
    """Maximum likelihood over the working parameters with random restarts.

    ``init``, if given, replaces the random start of the first restart.
    Keyword arguments override fields of ``options``.
    """
    options = options or FitOptions()
    if kw:
        options = FitOptions(**{**options.__dict__, **kw})
    seeds = np.random.SeedSequence(options.seed).generate_state(options.restarts).tolist()
    jobs = [(spec, data, options, s, init if i == 0 else None) for i, s in enumerate(seeds)]
    if options.n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(options.n_jobs) as pool:
            outcomes = list(pool.map(_run_restart, jobs))
    else:
        outcomes = [_run_restart(j) for j in jobs]

    records = [rec for _, rec in outcomes]
    best = None
    for (working, rec) in outcomes:
        if rec.converged and (best is None or rec.loglik > best[1].loglik):
            best = (working, rec)
    if best is None:
        raise FitError(f"no restart converged for {spec.coupling.value}", records)

    params = spec.order_states(spec.from_working(best[0]))
    with warnings.catch_warnings():
        # estimates on the boundary are expected here; the floor only guards the logs
        warnings.simplefilter("ignore", RuntimeWarning)
        working = spec.to_working(params)
    ll = log_likelihood(spec, params, data)
    result = FitResult(
        spec=spec,
        params=params,
        working=working,
        loglik=ll,
        aic=np.nan,
        restarts=records,
        natural_names=spec.natural_vector(params)[1],
        data_id=data_fingerprint(data),
        n_obs=data.T,
        options=options,
    )
    result.aic = aic(result)
    if spec.coupling is CouplingKind.MIXTURE_WEIGHT:
        off = spec.transitions.off_diagonal_weights(params.transition)
        result.flags["effectively_independent"] = bool(off.size and np.any(off < DEGENERATE_WEIGHT))
    return result


# -- standard errors -----------------------------------------------------------


def numerical_hessian(spec, working: WorkingParameters, data) -> np.ndarray:
    """Central differences of the analytic gradient, step 1e-5 * max(1, |theta|)."""
    theta = working.values
    n = theta.size
    H = np.empty((n, n))
    for i in range(n):
        h = 1e-5 * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        gp = loglik_and_gradient(spec, working.with_values(tp), data)[1]
        gm = loglik_and_gradient(spec, working.with_values(tm), data)[1]
        H[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def _natural_jacobian(spec, working):
    theta = working.values
    base = spec.natural_vector(spec.from_working(working))[0]
    J = np.empty((base.size, theta.size))
    for i in range(theta.size):
        h = 1e-5 * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fp = spec.natural_vector(spec.from_working(working.with_values(tp)))[0]
        fm = spec.natural_vector(spec.from_working(working.with_values(tm)))[0]
        J[:, i] = (fp - fm) / (2 * h)
    return J


def standard_errors(result: FitResult, data: ObservationSet, ridge=1e-10):
    """Delta-method standard errors of the natural parameters.

    Returns ``None`` (with a warning) when the observed information is not
    positive definite, e.g. for estimates on the boundary of the space.
    """
    spec, working = result.spec, result.working
    info = -numerical_hessian(spec, working, data)
    eig = np.linalg.eigvalsh(info)
    if eig.size and (eig[0] <= 0 or eig[0] <= ridge * eig[-1]):
        warnings.warn(
            "observed information not positive definite (boundary estimate or likelihood ridge); "
            "standard errors unavailable",
            RuntimeWarning,
        )
        result.std_errors = None
        return None
    cov = np.linalg.inv(info)
    J = _natural_jacobian(spec, working)
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", J, cov, J), 0, None))
    result.std_errors = se
    return se
