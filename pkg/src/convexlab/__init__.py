"""Lognormal mixture models, exact local-volatility surfaces, and Monte Carlo
certification of the convex ordering between stochastic and local-volatility
squared-VIX distributions, with a particle-calibrated two-point mixing
extension for long maturities."""

from .config import ConfigError, ScenarioConfig, parse_config
from .engine import (MarginalMatchReport, PathEnsemble, lognormal_quadrature,
                     marginal_match_report, sample_stoch_terminal,
                     simulate_locvol)
from .local_vol import (ExactLocalVol, LocalVolSurface, local_variance,
                        mixture_weights, surface_grid)
from .models import (VIX_WINDOW, DominantSet, MixtureModel, ValidationReport,
                     VolPath, bs_call, cumulative_variance, dominant_set,
                     lognormal_density, mixture_call, two_path_switch_model,
                     validate_model)
from .rng import RngSpec
from .slv import (BernoulliSpec, CalibrationResult, FlatnessReport,
                  LeverageCurve, LeverageSurface, ParticleSystem,
                  SlvVix2Result, estimate_leverage, flatness_report,
                  init_particles, preserved_order_report, run_calibration,
                  slv_vix2, step_particles)
from .vix import (ConvexOrderReport, ForwardVarianceCurve, Vix2Distribution,
                  VixFuturesComparison, convex_order_report,
                  forward_variance_limit, psi_at, vix2_loc_distribution,
                  vix2_stoch_constant, vix_futures)

__version__ = "0.1.0"

__all__ = [
    "BernoulliSpec", "CalibrationResult", "ConfigError", "ConvexOrderReport",
    "DominantSet", "ExactLocalVol", "FlatnessReport", "ForwardVarianceCurve",
    "LeverageCurve", "LeverageSurface", "LocalVolSurface",
    "MarginalMatchReport", "MixtureModel", "ParticleSystem", "PathEnsemble",
    "RngSpec", "ScenarioConfig", "SlvVix2Result", "ValidationReport",
    "VIX_WINDOW", "Vix2Distribution", "VixFuturesComparison", "VolPath",
    "bs_call", "convex_order_report", "cumulative_variance", "dominant_set",
    "estimate_leverage", "flatness_report", "forward_variance_limit",
    "init_particles", "local_variance", "lognormal_density",
    "lognormal_quadrature", "marginal_match_report", "mixture_call",
    "mixture_weights", "parse_config", "preserved_order_report", "psi_at",
    "run_calibration", "sample_stoch_terminal", "simulate_locvol", "slv_vix2",
    "step_particles", "surface_grid", "two_path_switch_model",
    "validate_model", "vix2_loc_distribution", "vix2_stoch_constant",
    "vix_futures",
]
