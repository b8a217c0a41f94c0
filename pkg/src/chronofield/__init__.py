"""Bayesian chronologies of radiocarbon-dated deposits with spreading onset fields."""

__version__ = "0.1.0"

from .calibration import (CalibrationCurve, CalibrationError, CurveRangeError, RadiocarbonDate,
                          interpolate_curve, load_curve, log_likelihood, log_likelihood_total,
                          mu_sigma, synthetic_curve)
from .model import ChronologyState, PriorSpec, sample_prior
from .onsetfield import Lattice, log_density_field, simulate_field
from .mcmc import ChainOutput, ChronologyData, RunConfig, Sampler, run_chain, run_chains

__all__ = [
    "CalibrationCurve", "CalibrationError", "CurveRangeError", "RadiocarbonDate",
    "interpolate_curve", "load_curve", "log_likelihood", "log_likelihood_total", "mu_sigma",
    "synthetic_curve", "ChronologyState", "PriorSpec", "sample_prior", "Lattice",
    "log_density_field", "simulate_field", "ChainOutput", "ChronologyData", "RunConfig",
    "Sampler", "run_chain", "run_chains",
]
