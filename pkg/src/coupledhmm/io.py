"""CSV ingestion, run configuration and model files."""

from __future__ import annotations

import csv
import os
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from .emissions import DataError, ObservationSet, shift_zeros
from .model import ModelSpec, Params

SCHEMA_VERSION = 1
MISSING_MARKERS = ("", "NA")
COUPLING_KINDS = ("cartesian", "cond_indep", "mixture_weight", "independent", "single_chain")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def fmt(x) -> str:
    """17 significant digits: lossless for doubles."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "NA"
    return f"{x:.17g}"


@dataclass
class RunConfig:
    model: dict
    fit: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    study: dict = field(default_factory=dict)
    source: str = ""

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw or {}, source=str(path))

    @classmethod
    def from_dict(cls, raw, source="") -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        unknown = set(raw) - {"schema_version", "model", "fit", "data", "output", "study"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = cls(
            model=dict(raw.get("model") or {}),
            fit=dict(raw.get("fit") or {}),
            data=dict(raw.get("data") or {}),
            output=dict(raw.get("output") or {}),
            study=dict(raw.get("study") or {}),
            source=source,
        )
        if cfg.model:
            cfg.model_spec()
        return cfg

    def model_spec(self, coupling=None) -> ModelSpec:
        m = self.model
        try:
            M = int(m["num_chains"])
            N = int(m["states_per_chain"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("model needs integer num_chains and states_per_chain") from None
        kind = coupling or m.get("coupling", "cartesian")
        if str(kind) not in COUPLING_KINDS:
            raise ConfigError(f"coupling must be one of {COUPLING_KINDS}, got {kind!r}")
        families = m.get("families", "normal")
        covs = self.covariate_columns()
        try:
            return ModelSpec(kind, M, N, families, tuple(len(c) for c in covs))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def covariate_columns(self) -> list:
        M = int(self.model.get("num_chains", 1))
        covs = self.model.get("covariates") or [[] for _ in range(M)]
        if len(covs) != M:
            raise ConfigError("model.covariates needs one list per chain")
        return [list(c or []) for c in covs]

    def fit_options(self, **overrides):
        from .inference import FitOptions

        f = {k: v for k, v in self.fit.items() if v is not None}
        f.update({k: v for k, v in overrides.items() if v is not None})
        return FitOptions(
            restarts=int(f.get("restarts", 10)),
            seed=int(f.get("seed", 0)),
            tolerance=float(f.get("tolerance", 1e-6)),
            max_iter=int(f.get("max_iter", 2000)),
            n_jobs=int(f.get("threads") or os.cpu_count() or 1),
        )


def _parse_time(value, row):
    try:
        return float(value)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(value).timestamp()
    except ValueError:
        raise DataError(f"row {row}: unparseable time value {value!r}") from None


def ingest_csv(path, config: RunConfig) -> ObservationSet:
    """Read a UTF-8 CSV into an ObservationSet using the config's column mapping.

    Beta-family columns have exact zeros shifted into (1e-8, 1e-6).
    """
    d = config.data
    cols = list(d.get("observation_columns") or [])
    if not cols:
        raise ConfigError("data.observation_columns is required")
    spec = config.model_spec()
    if len(cols) != spec.num_chains:
        raise ConfigError(f"{len(cols)} observation columns for {spec.num_chains} chains")
    markers = d.get("missing_marker", list(MISSING_MARKERS))
    markers = {str(m) for m in ([markers] if isinstance(markers, str) else markers)} | {""}
    time_col = d.get("time_column")
    cov_cols = config.covariate_columns()

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            wanted = cols + [c for cs in cov_cols for c in cs] + ([time_col] if time_col else [])
            missing = [c for c in wanted if c not in header]
            if missing:
                raise ConfigError(f"columns not found in {path}: {missing}")
            records = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not records:
        raise DataError(f"{path} contains no data rows")

    T = len(records)
    y = np.empty((T, len(cols)))
    mask = np.zeros((T, len(cols)), dtype=bool)
    covs = [np.empty((T, len(cs))) if cs else None for cs in cov_cols]
    times = []
    for t, rec in enumerate(records):
        row = t + 2  # header is line 1
        for m, c in enumerate(cols):
            v = (rec[c] or "").strip()
            if v in markers:
                mask[t, m] = True
                y[t, m] = np.nan
                continue
            try:
                y[t, m] = float(v)
            except ValueError:
                raise DataError(f"row {row}, column {c!r}: cannot parse {v!r}") from None
        for m, cs in enumerate(cov_cols):
            for j, c in enumerate(cs):
                v = (rec[c] or "").strip()
                try:
                    covs[m][t, j] = float(v)
                except ValueError:
                    raise DataError(f"row {row}, covariate {c!r}: cannot parse {v!r}") from None
        if time_col:
            times.append(_parse_time((rec[time_col] or "").strip(), row))
    if times and np.any(np.diff(times) <= 0):
        bad = int(np.argmax(np.diff(times) <= 0)) + 3
        raise DataError(f"time column not strictly increasing at row {bad}")

    seed = int(config.fit.get("seed", 0))
    for m in range(spec.num_chains):
        if spec.families[m] == "beta":
            y[:, m] = shift_zeros(y[:, m], seed + m)
    return ObservationSet(y, tuple(covs), mask)


def write_observations_csv(path, data: ObservationSet, columns=None, covariate_names=None):
    columns = columns or [f"y{m + 1}" for m in range(data.M)]
    cov_names = covariate_names or [
        [f"x{m + 1}_{j + 1}" for j in range(x.shape[1])] if x is not None else [] for m, x in enumerate(data.covariates)
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + list(columns) + [c for cs in cov_names for c in cs])
        for t in range(data.T):
            row = [t + 1]
            row += ["NA" if data.mask[t, m] else fmt(data.y[t, m]) for m in range(data.M)]
            for x in data.covariates:
                if x is not None:
                    row += [fmt(v) for v in x[t]]
            w.writerow(row)
    return cov_names


def write_states_csv(path, per_chain, extra=None):
    per_chain = np.asarray(per_chain)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["time"] + [f"chain_{m + 1}_state" for m in range(per_chain.shape[1])]
        extra = extra or {}
        w.writerow(head + list(extra))
        for t in range(per_chain.shape[0]):
            w.writerow([t + 1] + [int(s) for s in per_chain[t]] + [fmt(v[t]) for v in extra.values()])


# -- model files ----------------------------------------------------------------


def save_model(path, result, extra=None):
    from . import __version__

    doc = {
        "format": "coupledhmm-model",
        "library_version": __version__,
        "state_order": "states within each chain sorted by ascending mean (single chain: first stream)",
        "state_index_base": 1,
        "spec": result.spec.to_dict(),
        "params": result.params.to_dict(),
        "loglik": result.loglik,
        "aic": result.aic,
        "n_obs": result.n_obs,
        "data_id": result.data_id,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_model(path):
    """Return ``(spec, params, document)`` from a saved model file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from None
    if doc.get("format") != "coupledhmm-model":
        raise ConfigError(f"{path} is not a model file")
    return ModelSpec.from_dict(doc["spec"]), Params.from_dict(doc["params"]), doc


# -- density grids -------------------------------------------------------------


def density_grid(spec: ModelSpec, params: Params, grid):
    """State-dependent densities per chain on ``grid`` (one array per chain or shared).

    Each row: chain, state, x, density, weighted density, where the weight
    is the chain state's marginal stationary probability. Regression chains
    are evaluated at the covariate centre.
    """
    from .states import stationary_distribution

    delta = stationary_distribution(spec.tpm(params))
    S = spec.state_map
    rows = []
    for m in range(spec.num_chains):
        g = np.asarray(grid[m] if isinstance(grid, (list, tuple)) else grid, dtype=float)
        fam = spec.family(m)
        if fam.name == "beta" and (np.any(g <= 0) or np.any(g >= 1)):
            raise DataError("beta density grid must lie inside (0, 1)")
        x = None
        if spec.n_covariates[m]:
            center = params.emissions[m].get("center", np.zeros(spec.n_covariates[m]))
            x = np.tile(center, (len(g), 1))
        dens = np.exp(fam.logpdf(params.emissions[m], g, x))
        for i in range(spec.states_per_chain):
            w = float(delta[S[:, m] == i].sum())
            for xv, dv in zip(g, dens[:, i]):
                rows.append((m + 1, i + 1, xv, dv, w * dv, w))
    return rows


def write_density_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "state", "x", "density", "weighted_density", "weight"])
        for r in rows:
            w.writerow([r[0], r[1], fmt(r[2]), fmt(r[3]), fmt(r[4]), fmt(r[5])])
