"""Command-line interface: fit, decode, simulate, forecast, simstudy, select.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. Failures print one line to stderr of the form
``coupledhmm: error=<kind> code=<n> message="..."``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__, kernels
from .coupling import CouplingKind
from .decoding import disagreement_intervals, local_decode, viterbi
from .emissions import DataError
from .inference import FitError, NumericalError, compare_models, fit, standard_errors
from .io import (
    ConfigError,
    RunConfig,
    density_grid,
    fmt,
    ingest_csv,
    load_model,
    save_model,
    write_density_csv,
    write_observations_csv,
    write_states_csv,
)
from .simulation import SimConfig, forecast_score, paper_design, run_study, simulate

log = logging.getLogger("coupledhmm")

BUILTIN_STUDY = Path(__file__).parent / "configs" / "paper_study.yaml"


class UsageError(Exception):
    pass


def _out_dir(args, cfg=None) -> Path:
    d = args.out or (cfg.output.get("directory") if cfg else None) or "."
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_config(args) -> RunConfig:
    if not getattr(args, "config", None):
        raise UsageError("--config is required")
    return RunConfig.load(args.config)


def _load_data(args, cfg):
    path = getattr(args, "data", None) or cfg.data.get("path")
    if not path:
        raise ConfigError("no input data: give --data or data.path")
    p = Path(path)
    if not p.is_absolute() and cfg.source and not p.exists():
        p = Path(cfg.source).parent / p
    return ingest_csv(p, cfg)


def _header():
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# coupledhmm {__version__} generated {stamp}\n"


def _fit_report(result, cfg_source=""):
    se = result.std_errors
    names = result.natural_names
    values = result.natural
    table = []
    for i, (n, v) in enumerate(zip(names, values)):
        entry = {"name": n, "estimate": float(v)}
        entry["se"] = None if se is None else float(se[i])
        table.append(entry)
    return {
        "model": result.spec.to_dict(),
        "config": cfg_source,
        "kernel_backend": kernels.BACKEND,
        "options": {
            "restarts": result.options.restarts,
            "seed": result.options.seed,
            "tolerance": result.options.tolerance,
            "relative_tolerance": result.options.rel_tolerance,
            "max_iter": result.options.max_iter,
            "optimizer": "BFGS (scipy), analytic gradient",
        },
        "n_obs": result.n_obs,
        "loglik": float(result.loglik),
        "n_parameters": result.n_parameters,
        "aic": float(result.aic),
        "flags": result.flags,
        "standard_errors": "unavailable" if se is None else "delta method, numerical Hessian",
        "stationary_distribution": [float(v) for v in result.stationary],
        "parameters": table,
        "restarts": [
            {
                "seed": r.seed,
                "loglik": float(r.loglik),
                "converged": r.converged,
                "iterations": r.n_iter,
                "grad_inf_norm": float(r.grad_norm),
            }
            for r in result.restarts
        ],
    }


def _data_grid(data, spec, n=201):
    grids = []
    for m in range(spec.num_chains):
        y = data.y[~data.mask[:, m], m]
        if spec.families[m] == "beta":
            grids.append(np.linspace(1e-4, 1 - 1e-4, n))
        else:
            lo, hi = np.min(y), np.max(y)
            pad = 0.05 * (hi - lo + 1e-12)
            grids.append(np.linspace(lo - pad, hi + pad, n))
    return grids


def cmd_fit(args):
    cfg = _load_config(args)
    spec = cfg.model_spec()
    data = _load_data(args, cfg)
    opts = cfg.fit_options(seed=args.seed, restarts=args.restarts, threads=args.threads)
    result = fit(spec, data, opts)
    if not args.no_se:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            standard_errors(result, data)
        for w in caught:
            log.warning("%s", w.message)
    out = _out_dir(args, cfg)
    save_model(out / "model.json", result)
    report = _fit_report(result, cfg.source)
    (out / "fit_report.yaml").write_text(_header() + yaml.safe_dump(report, sort_keys=False))
    write_density_csv(out / "densities.csv", density_grid(spec, result.params, _data_grid(data, spec)))
    print(f"loglik={fmt(result.loglik)} aic={fmt(result.aic)} k={result.n_parameters}")
    return 0


def cmd_decode(args):
    cfg = _load_config(args)
    spec, params, _ = load_model(args.model)
    data = _load_data(args, cfg)
    path = viterbi(spec, params, data)
    post = local_decode(spec, params, data).posteriors
    out = _out_dir(args, cfg)
    write_states_csv(
        out / "decoded.csv",
        path.per_chain,
        {"product_state": path.global_path + 1, "max_posterior": post.max(axis=1)},
    )
    lines = []
    if spec.num_chains > 1:
        idx, frac = disagreement_intervals(path.per_chain)
        lines.append(f"disagreement_fraction={fmt(frac)}")
        lines.append(f"disagreement_count={len(idx)}")
        lines.append("disagreement_times=" + ",".join(str(i + 1) for i in idx))
    else:
        lines.append("disagreement_fraction=NA")
    (out / "disagreement.txt").write_text("\n".join(lines) + "\n")
    print(lines[0])
    return 0


def _read_covariates(args, spec):
    if not any(spec.n_covariates):
        return None
    if not (args.config and args.covariates):
        raise UsageError("regression models need --config and --covariates to simulate")
    cfg = RunConfig.load(args.config)
    import csv

    with open(args.covariates, newline="", encoding="utf-8") as fh:
        records = list(csv.DictReader(fh))
    if len(records) < args.T:
        raise DataError(f"covariate file has {len(records)} rows, need {args.T}")
    covs = []
    for cs in cfg.covariate_columns():
        if not cs:
            covs.append(None)
            continue
        try:
            covs.append(np.array([[float(r[c]) for c in cs] for r in records[: args.T]]))
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad covariate column: {exc}") from None
    return covs


def cmd_simulate(args):
    if args.paper_design:
        spec, params = paper_design(args.paper_design)
    elif args.model:
        spec, params, _ = load_model(args.model)
    else:
        raise UsageError("give --model or --paper-design")
    covs = _read_covariates(args, spec)
    seed = 0 if args.seed is None else args.seed
    data, truth = simulate(spec, params, args.T, seed, covariates=covs)
    out = _out_dir(args)
    write_observations_csv(out / "observations.csv", data)
    write_states_csv(out / "true_states.csv", truth)
    print(f"wrote {args.T} steps to {out}")
    return 0


def cmd_forecast(args):
    cfg = _load_config(args)
    spec, params, _ = load_model(args.model)
    data = _load_data(args, cfg)
    if not 0 <= args.split <= data.T:
        raise UsageError(f"--split must lie in 0..{data.T}")
    score = forecast_score(spec, params, data.slice(0, args.split), data.slice(args.split, None))
    out = _out_dir(args, cfg)
    doc = {"split": args.split, "n_test": data.T - args.split, "conditional_loglik": float(score)}
    (out / "forecast.yaml").write_text(_header() + yaml.safe_dump(doc, sort_keys=False))
    print(f"conditional_loglik={fmt(score)}")
    return 0


def cmd_simstudy(args):
    cfg = RunConfig.load(args.config or BUILTIN_STUDY)
    st = cfg.study
    readings = st.get("readings") or [st.get("reading", "sd")]
    out = _out_dir(args, cfg)
    threads = args.threads if args.threads is not None else st.get("threads")
    summaries = []
    for reading in readings:
        spec, params = paper_design(reading)
        config = SimConfig(
            spec,
            params,
            T_train=int(st.get("T_train", 1000)),
            T_test=int(st.get("T_test", 100)),
            replications=int(args.replications or st.get("replications", 100)),
            seed=int(args.seed if args.seed is not None else st.get("seed", 2020)),
            restarts=int(args.restarts or st.get("restarts", 5)),
            n_jobs=threads,
        )
        report = run_study(config)
        suffix = "" if len(readings) == 1 else f"_{reading}"
        report.to_csv(out / f"simreport{suffix}.csv")
        text = f"reading of N(mu, 1.5): 1.5 is the {'standard deviation' if reading == 'sd' else 'variance'}\n"
        text += report.summary()
        summaries.append(text)
    summary = "\n\n".join(summaries) + "\n"
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


def cmd_select(args):
    cfg = _load_config(args)
    data = _load_data(args, cfg)
    opts = cfg.fit_options(seed=args.seed, restarts=args.restarts, threads=args.threads)
    results = []
    for kind in CouplingKind:
        spec = cfg.model_spec(coupling=kind.value)
        if kind is CouplingKind.MIXTURE_WEIGHT and spec.num_chains < 2:
            continue
        try:
            results.append(fit(spec, data, opts))
        except FitError as exc:
            log.warning("%s", exc)
    if not results:
        raise NumericalError("no coupling kind could be fitted")
    table = compare_models(results)
    out = _out_dir(args, cfg)
    lines = ["rank,coupling,loglik,n_parameters,aic"]
    lines += [f"{r},{k},{fmt(ll)},{n},{fmt(a)}" for r, k, ll, n, a in table]
    (out / "selection.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="coupledhmm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, data=True):
        if config:
            sp.add_argument("--config", help="run configuration (YAML)")
        if data:
            sp.add_argument("--data", help="input CSV (overrides data.path)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--restarts", type=int)

    sp = sub.add_parser("fit", help="maximum likelihood fit")
    common(sp)
    sp.add_argument("--no-se", action="store_true", help="skip standard errors")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("decode", help="Viterbi and posterior decoding")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("simulate", help="sample from a fitted model or the study design")
    common(sp, data=False)
    sp.add_argument("--model")
    sp.add_argument("--paper-design", choices=["sd", "variance"])
    sp.add_argument("--T", type=int, default=1000)
    sp.add_argument("--covariates", help="CSV with the covariate columns named in --config")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("forecast", help="conditional log-likelihood of a test block")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--split", type=int, required=True, help="number of training rows")
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("simstudy", help="misspecification simulation study")
    common(sp, data=False)
    sp.add_argument("--replications", type=int)
    sp.set_defaults(func=cmd_simstudy)

    sp = sub.add_parser("select", help="AIC ranking across coupling kinds")
    common(sp)
    sp.set_defaults(func=cmd_select)
    return p


def _fail(kind, code, message):
    message = str(message).replace("\n", " ").replace('"', "'")
    print(f'coupledhmm: error={kind} code={code} message="{message}"', file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        return _fail("config", 1, exc)
    except DataError as exc:
        return _fail("data", 2, exc)
    except (NumericalError, FitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", 3, exc)
    except ValueError as exc:
        return _fail("config", 1, exc)


if __name__ == "__main__":
    sys.exit(main())
