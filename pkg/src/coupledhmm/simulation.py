"""Sampling, out-of-sample scoring and the misspecification study."""

from __future__ import annotations

import csv
import logging
import os
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .decoding import decoding_error, joint_decoding_error, viterbi
from .emissions import ObservationSet
from .inference import FitError, FitOptions, fit, log_likelihood
from .model import ModelSpec, Params
from .states import stationary_distribution

log = logging.getLogger(__name__)

PAPER_TPM = np.array(
    [
        [0.90, 0.02, 0.02, 0.06],
        [0.09, 0.80, 0.02, 0.09],
        [0.09, 0.02, 0.80, 0.09],
        [0.06, 0.02, 0.02, 0.90],
    ]
)
PAPER_MEANS = ((2.0, 6.0), (2.0, 5.0))


def paper_design(reading="sd"):
    """Two-chain, two-state Cartesian truth used in the misspecification study.

    ``reading`` says how the 1.5 in N(mu, 1.5) is taken: as the standard
    deviation ("sd") or as the variance ("variance").
    """
    if reading not in ("sd", "variance"):
        raise ValueError("reading must be 'sd' or 'variance'")
    sd = 1.5 if reading == "sd" else float(np.sqrt(1.5))
    spec = ModelSpec("cartesian", 2, 2, "normal")
    params = Params(
        {"gamma": PAPER_TPM.copy()},
        [{"mean": np.array(mu), "sd": np.full(2, sd)} for mu in PAPER_MEANS],
    )
    return spec, params


def study_competitors():
    """The three fitted formulations: coupled, multivariate HMM, separate HMMs."""
    return [
        ("CHMM", ModelSpec("cartesian", 2, 2, "normal")),
        ("multi. HMM", ModelSpec("single_chain", 2, 2, "normal")),
        ("uni. HMMs", ModelSpec("independent", 2, 2, "normal")),
    ]


def _draw_path(gamma, delta, T, rng):
    K = len(delta)
    cum = np.cumsum(gamma, axis=1)
    cum[:, -1] = 1.0
    rows = [list(r) for r in cum]
    u = rng.random(T)
    c0 = np.cumsum(delta)
    c0[-1] = 1.0
    path = np.empty(T, dtype=np.intp)
    s = min(bisect_right(list(c0), u[0]), K - 1)
    path[0] = s
    for t in range(1, T):
        s = min(bisect_right(rows[s], u[t]), K - 1)
        path[t] = s
    return path


def simulate(spec: ModelSpec, params: Params, T: int, seed, covariates=None):
    """Draw ``T`` steps from the model.

    Returns the observations and the true 1-based chain states (T x M).
    ``covariates`` (one entry per chain, None where unused) are required for
    regression chains.
    """
    spec.check(params)
    if T < 0:
        raise ValueError("T must be non-negative")
    rng = np.random.default_rng(seed)
    gamma = spec.tpm(params)
    delta = stationary_distribution(gamma)
    path = _draw_path(gamma, delta, T, rng) if T else np.zeros(0, dtype=np.intp)
    states = spec.state_map[path]
    covs = tuple(covariates) if covariates is not None else (None,) * spec.num_chains
    y = np.empty((T, spec.num_chains))
    for m in range(spec.num_chains):
        if spec.n_covariates[m] and covs[m] is None:
            raise ValueError(f"chain {m + 1} needs covariates to simulate")
        y[:, m] = spec.family(m).sample(params.emissions[m], states[:, m], rng, covs[m])
    return ObservationSet(y, covs), states + 1


def forecast_score(spec: ModelSpec, params, train: ObservationSet, test: ObservationSet) -> float:
    """log L(train + test) - log L(train): conditional log-likelihood of the test block."""
    if test.T == 0:
        return 0.0
    if train.T == 0:
        return log_likelihood(spec, params, test)
    score = log_likelihood(spec, params, train.concat(test)) - log_likelihood(spec, params, train)
    if not np.isfinite(score):
        raise ArithmeticError("non-finite forecast score")
    return float(score)


# -- study harness --------------------------------------------------------------


@dataclass
class SimConfig:
    truth_spec: ModelSpec
    truth_params: Params
    T_train: int = 1000
    T_test: int = 100
    replications: int = 100
    seed: int = 2020
    competing: list = field(default_factory=study_competitors)
    restarts: int = 5
    tolerance: float = 1e-6
    n_jobs: int | None = None

    def __post_init__(self):
        if self.T_train < 1 or self.T_test < 1 or self.replications < 1:
            raise ValueError("T_train, T_test and replications must be at least 1")


@dataclass
class SimReport:
    rows: list
    labels: list
    failed: list
    config: dict

    def _ok(self):
        bad = set(self.failed)
        return [r for r in self.rows if r["replication"] not in bad]

    def mean(self, label, key) -> float:
        vals = [r[key] for r in self._ok() if r["model"] == label]
        return float(np.mean(vals)) if vals else np.nan

    def values(self, label, key) -> np.ndarray:
        return np.array([r[key] for r in self._ok() if r["model"] == label])

    @property
    def n_used(self) -> int:
        return len({r["replication"] for r in self._ok()})

    def win_rates(self) -> dict:
        """Share of replications in which each model has the best forecast score.

        Ties go to the earliest-listed model.
        """
        by_rep = {}
        for r in self._ok():
            by_rep.setdefault(r["replication"], {})[r["model"]] = r["forecast"]
        wins = dict.fromkeys(self.labels, 0)
        for scores in by_rep.values():
            best = max(self.labels, key=lambda lab: (scores[lab], -self.labels.index(lab)))
            wins[best] += 1
        n = max(len(by_rep), 1)
        return {lab: wins[lab] / n for lab in self.labels}

    def summary(self) -> str:
        w = max(len(lab) for lab in self.labels) + 2
        head = "data set".ljust(20) + "".join(lab.rjust(w) for lab in self.labels)
        def err_row(name, key):
            return name.ljust(20) + "".join(f"{self.mean(lab, key):{w}.1f}" for lab in self.labels)

        lines = [
            "Average percentage of falsely decoded state vectors (Viterbi)",
            head,
            "-" * len(head),
            err_row("training data set", "train_error_joint"),
            err_row("test data set", "test_error_joint"),
            "",
            "Average percentage of falsely decoded chain states (per entry)",
            err_row("training data set", "train_error"),
            err_row("test data set", "test_error"),
            "",
            "best conditional test log-likelihood (share of runs)",
            "".ljust(20) + "".join(f"{v * 100:{w}.1f}" for v in self.win_rates().values()),
            "",
            f"replications used: {self.n_used} (failed: {len(self.failed)})",
        ]
        return "\n".join(lines)

    def to_csv(self, path):
        keys = list(self.rows[0].keys()) if self.rows else ["replication", "model"]
        for r in self.rows:
            for k in r:
                if k not in keys:
                    keys.append(k)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})


def _replication(args):
    config, rep, seed = args
    ss = np.random.SeedSequence(seed)
    sim_seed, fit_seed = ss.generate_state(2).tolist()
    T = config.T_train + config.T_test
    data, truth = simulate(config.truth_spec, config.truth_params, T, sim_seed)
    train, test = data.slice(0, config.T_train), data.slice(config.T_train, T)
    rows, failed = [], False
    for label, spec in config.competing:
        options = FitOptions(restarts=config.restarts, seed=fit_seed, tolerance=config.tolerance)
        try:
            res = fit(spec, train, options)
        except FitError as exc:
            log.warning("replication %d: %s", rep, exc)
            failed = True
            continue
        row = {"replication": rep, "model": label, "loglik": res.loglik, "aic": res.aic}
        train_path = viterbi(spec, res.params, train).per_chain
        test_path = viterbi(spec, res.params, test).per_chain
        row["train_error"] = decoding_error(train_path, truth[: config.T_train])
        row["test_error"] = decoding_error(test_path, truth[config.T_train :])
        row["train_error_joint"] = joint_decoding_error(train_path, truth[: config.T_train])
        row["test_error_joint"] = joint_decoding_error(test_path, truth[config.T_train :])
        row["forecast"] = forecast_score(spec, res.params, train, test)
        for m in range(spec.num_chains):
            means = spec.family(m).state_means(res.params.emissions[m])
            for i, mu in enumerate(means):
                row[f"mean_{m + 1}_{i + 1}"] = float(mu)
        rows.append(row)
    return rep, rows, failed


def run_study(config: SimConfig, progress=None) -> SimReport:
    """Simulate, fit every competing model, decode and score each replication.

    A replication in which any model fails to fit is excluded for all models.
    """
    seeds = np.random.SeedSequence(config.seed).generate_state(config.replications).tolist()
    jobs = [(config, r, s) for r, s in enumerate(seeds)]
    n_jobs = config.n_jobs or os.cpu_count() or 1
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            outcomes = list(pool.map(_replication, jobs))
    else:
        outcomes = []
        for j in jobs:
            outcomes.append(_replication(j))
            if progress:
                progress(len(outcomes), len(jobs))
    outcomes.sort(key=lambda o: o[0])
    rows = [row for _, rs, _ in outcomes for row in rs]
    failed = [rep for rep, _, bad in outcomes if bad]
    cfg = {
        "T_train": config.T_train,
        "T_test": config.T_test,
        "replications": config.replications,
        "seed": config.seed,
        "restarts": config.restarts,
    }
    return SimReport(rows, [lab for lab, _ in config.competing], failed, cfg)
