"""State-dependent observation distributions.

Each chain has one family. Given the chain's state the observation is
drawn from that family; given the product state the M streams are
independent, so product-state log-densities are sums over chains.
Missing observations contribute a density of one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

LOG_2PI = np.log(2 * np.pi)


class DataError(ValueError):
    """Observations incompatible with the model (support, shape, content)."""


@dataclass(frozen=True)
class ObservationSet:
    """T x M observations with an optional covariate matrix per chain.

    ``mask`` is True where an observation is missing; the corresponding
    entries of ``y`` are NaN.
    """

    y: np.ndarray
    covariates: tuple = field(default=())
    mask: np.ndarray | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise DataError("observations must be a T x M matrix")
        mask = np.isnan(y) if self.mask is None else np.asarray(self.mask, dtype=bool) | np.isnan(y)
        if mask.shape != y.shape:
            raise DataError("mask shape must match observations")
        y[mask] = np.nan
        covs = tuple(self.covariates) if self.covariates else (None,) * y.shape[1]
        if len(covs) != y.shape[1]:
            raise DataError("need one covariate entry (or None) per chain")
        fixed = []
        for x in covs:
            if x is not None:
                x = np.array(x, dtype=float)
                if x.ndim == 1:
                    x = x[:, None]
                if x.shape[0] != y.shape[0]:
                    raise DataError("covariate rows must match the number of time steps")
                if not np.all(np.isfinite(x)):
                    raise DataError("covariates must be finite")
            fixed.append(x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "covariates", tuple(fixed))

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def M(self) -> int:
        return self.y.shape[1]

    def __len__(self):
        return self.T

    def slice(self, start=None, stop=None) -> "ObservationSet":
        sl = slice(start, stop)
        covs = tuple(None if x is None else x[sl] for x in self.covariates)
        return ObservationSet(self.y[sl], covs, self.mask[sl])

    def concat(self, other: "ObservationSet") -> "ObservationSet":
        covs = []
        for a, b in zip(self.covariates, other.covariates):
            covs.append(None if a is None else np.vstack([a, b]))
        return ObservationSet(
            np.vstack([self.y, other.y]), tuple(covs), np.vstack([self.mask, other.mask])
        )

    def column(self, m):
        """(values, observed-mask) for chain m with missing values filled by 0.5."""
        obs = ~self.mask[:, m]
        return np.where(obs, self.y[:, m], 0.5), obs


class Family:
    """Interface shared by the emission families.

    Parameters for one chain are a dict of arrays whose first axis is the
    chain's state.
    """

    name = ""
    param_names: tuple = ()

    def n_working(self, n_states, n_cov=0) -> int:
        raise NotImplementedError

    def logpdf(self, params, y, x=None) -> np.ndarray:
        """(T, N) log-densities of each observation under each state."""
        raise NotImplementedError

    def score(self, params, y, x, weights) -> np.ndarray:
        """Gradient of sum(weights * logpdf) w.r.t. the working vector."""
        raise NotImplementedError

    def to_working(self, params) -> np.ndarray:
        raise NotImplementedError

    def from_working(self, theta, n_states, template) -> dict:
        raise NotImplementedError

    def state_means(self, params) -> np.ndarray:
        raise NotImplementedError

    def sample(self, params, states, rng, x=None) -> np.ndarray:
        raise NotImplementedError

    def initial(self, y, n_states, rng, x=None, jitter=True) -> dict:
        raise NotImplementedError

    def permute(self, params, perm) -> dict:
        return {k: (np.asarray(v)[perm] if k in self.state_keys else v) for k, v in params.items()}

    state_keys: tuple = ()

    def natural_vector(self, params):
        values, names = [], []
        for key in self.param_names:
            arr = np.atleast_1d(np.asarray(params[key], dtype=float))
            for idx in np.ndindex(*arr.shape):
                values.append(arr[idx])
                names.append(f"{key}[{','.join(str(i + 1) for i in idx)}]")
        return np.array(values), names

    def check(self, params, n_states):
        for key in self.state_keys:
            if np.asarray(params[key]).shape[0] != n_states:
                raise ValueError(f"{self.name}: '{key}' needs one entry per state ({n_states})")


def _quantile_starts(y, n_states, rng, jitter):
    probs = (np.arange(n_states) + 0.5) / n_states
    if jitter:
        probs = np.clip(probs + rng.uniform(-0.5, 0.5, n_states) / (2 * n_states), 0.01, 0.99)
    return np.sort(np.quantile(y, probs))


class Normal(Family):
    name = "normal"
    param_names = ("mean", "sd")
    state_keys = ("mean", "sd")

    def n_working(self, n_states, n_cov=0):
        return 2 * n_states

    def logpdf(self, params, y, x=None):
        mu = np.asarray(params["mean"], dtype=float)
        sd = np.asarray(params["sd"], dtype=float)
        z = (y[:, None] - mu) / sd
        return -0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z

    def score(self, params, y, x, weights):
        mu = np.asarray(params["mean"], dtype=float)
        sd = np.asarray(params["sd"], dtype=float)
        r = (y[:, None] - mu) / sd
        d_mu = (weights * r).sum(axis=0) / sd
        d_logsd = (weights * (r * r - 1)).sum(axis=0)
        return np.concatenate([d_mu, d_logsd])

    def to_working(self, params):
        return np.concatenate([np.asarray(params["mean"], float), np.log(params["sd"])])

    def from_working(self, theta, n_states, template=None):
        return {"mean": theta[:n_states].copy(), "sd": np.exp(theta[n_states : 2 * n_states])}

    def state_means(self, params):
        return np.asarray(params["mean"], dtype=float)

    def sample(self, params, states, rng, x=None):
        return rng.normal(np.asarray(params["mean"])[states], np.asarray(params["sd"])[states])

    def initial(self, y, n_states, rng, x=None, jitter=True):
        means = _quantile_starts(y, n_states, rng, jitter)
        spread = np.std(y) / n_states
        sd = np.full(n_states, spread)
        if jitter:
            sd = sd * rng.uniform(0.5, 1.5, n_states)
        return {"mean": means, "sd": np.maximum(sd, 1e-3 * (np.std(y) + 1e-12))}


class Beta(Family):
    name = "beta"
    param_names = ("alpha", "beta")
    state_keys = ("alpha", "beta")

    def n_working(self, n_states, n_cov=0):
        return 2 * n_states

    def logpdf(self, params, y, x=None):
        a = np.asarray(params["alpha"], dtype=float)
        b = np.asarray(params["beta"], dtype=float)
        inside = (y > 0) & (y < 1)
        yc = np.where(inside, y, 0.5)[:, None]
        out = (a - 1) * np.log(yc) + (b - 1) * np.log1p(-yc) - special.betaln(a, b)
        out[~inside] = -np.inf
        return out

    def score(self, params, y, x, weights):
        a = np.asarray(params["alpha"], dtype=float)
        b = np.asarray(params["beta"], dtype=float)
        ly = np.log(y)[:, None]
        l1y = np.log1p(-y)[:, None]
        dab = special.digamma(a + b)
        d_loga = a * (weights * (ly - special.digamma(a) + dab)).sum(axis=0)
        d_logb = b * (weights * (l1y - special.digamma(b) + dab)).sum(axis=0)
        return np.concatenate([d_loga, d_logb])

    def to_working(self, params):
        return np.concatenate([np.log(params["alpha"]), np.log(params["beta"])])

    def from_working(self, theta, n_states, template=None):
        return {"alpha": np.exp(theta[:n_states]), "beta": np.exp(theta[n_states : 2 * n_states])}

    def state_means(self, params):
        a = np.asarray(params["alpha"], dtype=float)
        return a / (a + np.asarray(params["beta"], dtype=float))

    def sample(self, params, states, rng, x=None):
        return rng.beta(np.asarray(params["alpha"])[states], np.asarray(params["beta"])[states])

    def initial(self, y, n_states, rng, x=None, jitter=True):
        # moment matching within quantile bins of the data
        edges = np.quantile(y, np.linspace(0, 1, n_states + 1))
        alpha, beta = np.empty(n_states), np.empty(n_states)
        for i in range(n_states):
            sel = y[(y >= edges[i]) & (y <= edges[i + 1])]
            if sel.size < 2:
                sel = y
            mu = np.clip(sel.mean(), 1e-4, 1 - 1e-4)
            var = max(sel.var(), 1e-8)
            conc = np.clip(mu * (1 - mu) / var - 1, 0.5, 1e4)
            if jitter:
                conc *= rng.uniform(0.5, 1.5)
                mu = np.clip(mu * rng.uniform(0.8, 1.2), 1e-4, 1 - 1e-4)
            alpha[i], beta[i] = mu * conc, (1 - mu) * conc
        order = np.argsort(alpha / (alpha + beta))
        return {"alpha": alpha[order], "beta": beta[order]}


class NormalRegression(Family):
    """Normal with a state-specific linear predictor for the mean.

    Covariates enter after centring by ``center`` and dividing by ``scale``;
    the coefficients therefore live on the standardised covariate scale.
    """

    name = "normal_regression"
    param_names = ("coef", "sd")
    state_keys = ("coef", "sd")

    def n_working(self, n_states, n_cov=0):
        return n_states * (n_cov + 2)

    @staticmethod
    def design(params, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        center = np.asarray(params.get("center", np.zeros(x.shape[1])), dtype=float)
        scale = np.asarray(params.get("scale", np.ones(x.shape[1])), dtype=float)
        return np.column_stack([np.ones(x.shape[0]), (x - center) / scale])

    def _mean(self, params, x):
        coef = np.asarray(params["coef"], dtype=float)
        if x is None:
            if coef.shape[1] != 1:
                raise DataError("normal_regression chain needs covariates")
            return np.broadcast_to(coef[:, 0], (1, coef.shape[0])), None
        X = self.design(params, x)
        if X.shape[1] != coef.shape[1]:
            raise DataError(f"expected {coef.shape[1] - 1} covariates, got {X.shape[1] - 1}")
        return X @ coef.T, X

    def logpdf(self, params, y, x=None):
        mu, _ = self._mean(params, x)
        sd = np.asarray(params["sd"], dtype=float)
        z = (y[:, None] - mu) / sd
        return -0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z

    def score(self, params, y, x, weights):
        mu, X = self._mean(params, x)
        sd = np.asarray(params["sd"], dtype=float)
        r = (y[:, None] - mu) / sd
        wr = weights * r / sd
        if X is None:
            d_coef = wr.sum(axis=0)[:, None]
        else:
            d_coef = wr.T @ X
        d_logsd = (weights * (r * r - 1)).sum(axis=0)
        return np.concatenate([d_coef.ravel(), d_logsd])

    def to_working(self, params):
        return np.concatenate([np.asarray(params["coef"], float).ravel(), np.log(params["sd"])])

    def from_working(self, theta, n_states, template):
        p1 = np.asarray(template["coef"]).shape[1]
        out = {
            "coef": theta[: n_states * p1].reshape(n_states, p1).copy(),
            "sd": np.exp(theta[n_states * p1 : n_states * (p1 + 1)]),
        }
        for key in ("center", "scale"):
            if key in template:
                out[key] = np.asarray(template[key], dtype=float)
        return out

    def state_means(self, params):
        return np.asarray(params["coef"], dtype=float)[:, 0]

    def sample(self, params, states, rng, x=None):
        mu, _ = self._mean(params, x)
        if mu.shape[0] == 1:
            mu = np.broadcast_to(mu, (len(states), mu.shape[1]))
        return rng.normal(mu[np.arange(len(states)), states], np.asarray(params["sd"])[states])

    def initial(self, y, n_states, rng, x=None, jitter=True):
        p = 0 if x is None else np.atleast_2d(np.asarray(x).T).shape[0]
        coef = np.zeros((n_states, p + 1))
        coef[:, 0] = _quantile_starts(y, n_states, rng, jitter)
        if jitter and p:
            coef[:, 1:] = rng.normal(0, 0.05 * np.std(y), (n_states, p))
        sd = np.full(n_states, np.std(y) / n_states)
        if jitter:
            sd = sd * rng.uniform(0.5, 1.5, n_states)
        return {"coef": coef, "sd": np.maximum(sd, 1e-3 * (np.std(y) + 1e-12))}


FAMILIES = {f.name: f for f in (Normal(), Beta(), NormalRegression())}


def get_family(name) -> Family:
    key = str(name).strip().lower().replace("-", "_")
    key = {"normalregression": "normal_regression", "regression": "normal_regression"}.get(key, key)
    try:
        return FAMILIES[key]
    except KeyError:
        raise ValueError(f"unknown emission family {name!r}") from None


def log_density(family, params, y, covariate_row=None) -> float:
    """Log-density of a single observation under one state's parameters.

    ``params`` holds scalars (``coef`` a 1-D vector for regression).
    Observations outside the family's support give ``-inf`` and a warning.
    """
    fam = get_family(family)
    state = {k: np.atleast_1d(np.asarray(v, dtype=float))[None] if k in fam.state_keys else v
             for k, v in params.items()}
    if fam is FAMILIES["normal_regression"]:
        state["coef"] = state["coef"].reshape(1, -1)
    if fam is FAMILIES["beta"] and not 0 < y < 1:
        warnings.warn(f"beta observation {y} outside (0, 1)", RuntimeWarning)
        return -np.inf
    x = None if covariate_row is None else np.atleast_2d(np.asarray(covariate_row, dtype=float))
    return float(fam.logpdf(state, np.array([float(y)]), x)[0, 0])


def shift_zeros(column, seed, low=1e-8, high=1e-6) -> np.ndarray:
    """Replace exact zeros by Uniform(low, high) draws; other values untouched."""
    col = np.array(column, dtype=float)
    finite = col[~np.isnan(col)]
    if np.any(finite < 0) or np.any(finite >= 1):
        raise DataError("beta-family values must lie in [0, 1)")
    zeros = col == 0
    rng = np.random.default_rng(seed)
    col[zeros] = rng.uniform(low, high, int(zeros.sum()))
    return col
