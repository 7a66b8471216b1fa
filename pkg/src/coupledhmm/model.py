"""Model specifications and their parameter containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .coupling import Coupling, CouplingKind, as_kind, count_parameters
from .emissions import DataError, ObservationSet, get_family
from .states import StateSpace, stationary_distribution


@dataclass(frozen=True)
class ModelSpec:
    """Coupling form, state counts, per-chain emission families and covariates."""

    coupling: CouplingKind
    num_chains: int
    states_per_chain: int
    families: tuple
    n_covariates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "coupling", as_kind(self.coupling))
        fams = self.families
        if isinstance(fams, str):
            fams = (fams,) * self.num_chains
        fams = tuple(get_family(f).name for f in fams)
        if len(fams) != self.num_chains:
            raise ValueError("need one emission family per chain")
        object.__setattr__(self, "families", fams)
        ncov = tuple(self.n_covariates) if self.n_covariates else (0,) * self.num_chains
        if len(ncov) != self.num_chains:
            raise ValueError("need one covariate count per chain")
        for f, p in zip(fams, ncov):
            if p and f != "normal_regression":
                raise ValueError("covariates are only supported for normal_regression chains")
        object.__setattr__(self, "n_covariates", tuple(int(p) for p in ncov))

    @property
    def space(self) -> StateSpace:
        return StateSpace(self.num_chains, self.states_per_chain)

    @cached_property
    def transitions(self) -> Coupling:
        return Coupling(self.coupling, self.space)

    @property
    def K(self) -> int:
        return self.transitions.K

    @property
    def state_map(self) -> np.ndarray:
        """(K, M) 0-based chain states read by each model state."""
        return self.transitions.state_map

    def family(self, m):
        return get_family(self.families[m])

    def n_emission_params(self) -> int:
        N = self.states_per_chain
        return sum(self.family(m).n_working(N, p) for m, p in enumerate(self.n_covariates))

    def n_free_parameters(self) -> int:
        return count_parameters(self.coupling, self.space) + self.n_emission_params()

    def with_coupling(self, kind) -> "ModelSpec":
        return ModelSpec(kind, self.num_chains, self.states_per_chain, self.families, self.n_covariates)

    # -- parameter handling ---------------------------------------------------

    def to_working(self, params: "Params") -> "WorkingParameters":
        blocks = [("transition", self.transitions.to_working(params.transition))]
        for m, em in enumerate(params.emissions):
            blocks.append((f"emission[{m + 1}]", self.family(m).to_working(em)))
        layout, pos = [], 0
        for name, vals in blocks:
            layout.append((name, pos, pos + len(vals)))
            pos += len(vals)
        values = np.concatenate([v for _, v in blocks])
        fixed = tuple({k: v for k, v in em.items() if k in ("center", "scale")} for em in params.emissions)
        return WorkingParameters(values, tuple(layout), fixed)

    def from_working(self, working: "WorkingParameters") -> "Params":
        theta = np.asarray(working.values, dtype=float)
        spans = {name: (a, b) for name, a, b in working.layout}
        a, b = spans["transition"]
        transition = self.transitions.from_working(theta[a:b])
        emissions = []
        N = self.states_per_chain
        for m in range(self.num_chains):
            a, b = spans[f"emission[{m + 1}]"]
            template = dict(working.fixed[m]) if working.fixed else {}
            template["coef"] = np.zeros((N, self.n_covariates[m] + 1))
            emissions.append(self.family(m).from_working(theta[a:b], N, template))
        return Params(transition, emissions)

    def check(self, params: "Params"):
        self.transitions.validate(params.transition)
        if len(params.emissions) != self.num_chains:
            raise ValueError("need emission parameters for every chain")
        for m, em in enumerate(params.emissions):
            self.family(m).check(em, self.states_per_chain)

    def tpm(self, params: "Params") -> np.ndarray:
        return self.transitions.tpm(params.transition)

    def log_emissions(self, params: "Params", data: ObservationSet, chain_level=False):
        """(T, K) log-densities of each time step under each model state.

        With ``chain_level=True`` the per-chain (T, N) matrices are returned too.
        """
        if data.M != self.num_chains:
            raise DataError(f"model has {self.num_chains} chains but data has {data.M} columns")
        T = data.T
        out = np.zeros((T, self.K))
        per_chain = []
        for m in range(self.num_chains):
            y, obs = data.column(m)
            lp = self.family(m).logpdf(params.emissions[m], y, data.covariates[m])
            lp = np.where(obs[:, None], lp, 0.0)
            per_chain.append(lp)
            out += lp[:, self.state_map[:, m]]
        if chain_level:
            return out, per_chain
        return out

    def natural_vector(self, params: "Params"):
        vals, names = self.transitions.natural_vector(params.transition)
        vals, names = [vals], list(names)
        for m, em in enumerate(params.emissions):
            v, n = self.family(m).natural_vector(em)
            vals.append(v)
            names += [f"chain{m + 1}.{s}" for s in n]
        return np.concatenate(vals), names

    def order_states(self, params: "Params") -> "Params":
        """Relabel states so state means increase within each chain.

        Single-chain models are ordered by the first stream's means.
        """
        if self.coupling is CouplingKind.SINGLE_CHAIN:
            p = np.argsort(self.family(0).state_means(params.emissions[0]), kind="stable")
            perms = [p] * self.num_chains
        else:
            perms = [
                np.argsort(self.family(m).state_means(em), kind="stable")
                for m, em in enumerate(params.emissions)
            ]
        transition = self.transitions.relabel(params.transition, perms)
        emissions = [self.family(m).permute(em, perms[m]) for m, em in enumerate(params.emissions)]
        return Params(transition, emissions)

    def to_dict(self) -> dict:
        return {
            "coupling": self.coupling.value,
            "num_chains": self.num_chains,
            "states_per_chain": self.states_per_chain,
            "families": list(self.families),
            "n_covariates": list(self.n_covariates),
        }

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        return cls(
            d["coupling"],
            int(d["num_chains"]),
            int(d["states_per_chain"]),
            tuple(d["families"]),
            tuple(d.get("n_covariates", ())),
        )


@dataclass
class Params:
    """Natural parameters: transition blocks plus one dict per chain."""

    transition: dict
    emissions: list

    def copy(self) -> "Params":
        return Params(
            {k: np.array(v, dtype=float) for k, v in self.transition.items()},
            [{k: np.array(v, dtype=float) for k, v in em.items()} for em in self.emissions],
        )

    def to_dict(self) -> dict:
        return {
            "transition": {k: np.asarray(v).tolist() for k, v in self.transition.items()},
            "emissions": [{k: np.asarray(v).tolist() for k, v in em.items()} for em in self.emissions],
        }

    @classmethod
    def from_dict(cls, d) -> "Params":
        return cls(
            {k: np.asarray(v, dtype=float) for k, v in d["transition"].items()},
            [{k: np.asarray(v, dtype=float) for k, v in em.items()} for em in d["emissions"]],
        )


@dataclass(frozen=True)
class WorkingParameters:
    """Unconstrained vector plus its segment layout ``(name, start, stop)``.

    ``fixed`` carries per-chain quantities that are not optimised (the
    covariate centring of regression chains).
    """

    values: np.ndarray
    layout: tuple
    fixed: tuple = field(default=())

    def with_values(self, values) -> "WorkingParameters":
        return WorkingParameters(np.asarray(values, dtype=float), self.layout, self.fixed)

    def segment(self, name):
        for n, a, b in self.layout:
            if n == name:
                return self.values[a:b]
        raise KeyError(name)


def initial_distribution(spec: ModelSpec, params: Params) -> np.ndarray:
    return stationary_distribution(spec.tpm(params))
