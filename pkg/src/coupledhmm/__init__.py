"""Coupled hidden Markov models for multivariate time series."""

__version__ = "0.1.0"

from .coupling import Coupling, CouplingKind, count_parameters
from .decoding import StatePath, local_decode, viterbi
from .emissions import DataError, ObservationSet
from .inference import FitError, FitOptions, FitResult, NumericalError, compare_models, fit, log_likelihood, standard_errors
from .model import ModelSpec, Params
from .simulation import SimConfig, forecast_score, run_study, simulate
from .states import StateSpace, stationary_distribution

__all__ = [
    "Coupling",
    "CouplingKind",
    "DataError",
    "FitError",
    "FitOptions",
    "FitResult",
    "ModelSpec",
    "NumericalError",
    "ObservationSet",
    "Params",
    "SimConfig",
    "StatePath",
    "StateSpace",
    "compare_models",
    "count_parameters",
    "fit",
    "forecast_score",
    "local_decode",
    "log_likelihood",
    "run_study",
    "simulate",
    "standard_errors",
    "stationary_distribution",
    "viterbi",
]
