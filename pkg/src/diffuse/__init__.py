"""Contagion simulation and inference of external influence on networks."""

from .analysis import aggregate_report, detect_peaks, evaluate, shape_l2
from .baselines import naive_event_profile, naive_exposure_curve
from .exposure import ExposureCurve, eta, eta_integral, infection_cdf, p_exp
from .hazards import HazardModel, hazard_cdf, lambda_int_cumulative, parse_hazard
from .inference import (EventProfile, FitOptions, InferenceResult, InsufficientDataError,
                        TrackedNodeSet, build_tracked_set, external_fraction, fit,
                        interpolate_profile, log_likelihood, solve_event_profile, solve_rho1)
from .network import Network, generate_preferential_attachment, load_edges, save_edges
from .simulator import SimulationConfig, SimulationResult, TabulatedRate, simulate
from .trace import ContagionTrace, load_infections, save_infections

__version__ = "0.1.0"

__all__ = [
    "aggregate_report",
    "detect_peaks",
    "evaluate",
    "shape_l2",
    "naive_event_profile",
    "naive_exposure_curve",
    "ExposureCurve",
    "eta",
    "eta_integral",
    "infection_cdf",
    "p_exp",
    "HazardModel",
    "hazard_cdf",
    "lambda_int_cumulative",
    "parse_hazard",
    "EventProfile",
    "FitOptions",
    "InferenceResult",
    "InsufficientDataError",
    "TrackedNodeSet",
    "build_tracked_set",
    "external_fraction",
    "fit",
    "interpolate_profile",
    "log_likelihood",
    "solve_event_profile",
    "solve_rho1",
    "Network",
    "generate_preferential_attachment",
    "load_edges",
    "save_edges",
    "SimulationConfig",
    "SimulationResult",
    "TabulatedRate",
    "simulate",
    "ContagionTrace",
    "load_infections",
    "save_infections",
]
