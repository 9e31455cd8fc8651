"""Conditional distribution estimation with a neural log-hazard model.

A small feed-forward network outputs the log hazard ``h(t_prev, t, x)``; a
discretised full-likelihood loss fits it to right-censored survival data with
time-varying covariates or to ordinary uncensored responses.  Survival and
distribution curves, means, quantiles and predictive intervals follow from the
fitted hazard.
"""
__version__ = "0.1.0"

from .curves import StepCurve, cdf_curve, survival_curve
from .expansion import CovariatePath, SurvivalRecord, UncensoredRecord, build_grid, expand_censored, expand_uncensored
from .losses import censored_loss, uncensored_loss
from .metrics import EvalReport, c_index_td, integrated_scores, km_censoring
from .nn_core import Network, forward, init_network
from .trainer import TrainConfig, fit_swap_average, grid_search, train

__all__ = [
    "CovariatePath",
    "EvalReport",
    "Network",
    "StepCurve",
    "SurvivalRecord",
    "TrainConfig",
    "UncensoredRecord",
    "build_grid",
    "c_index_td",
    "cdf_curve",
    "censored_loss",
    "expand_censored",
    "expand_uncensored",
    "fit_swap_average",
    "forward",
    "grid_search",
    "init_network",
    "integrated_scores",
    "km_censoring",
    "survival_curve",
    "train",
    "uncensored_loss",
]
