"""Antithetic multilevel Monte Carlo with modified Milstein schemes without Levy areas."""

__version__ = "0.1.0"

from .brownian import CoupledIncrements, RngStream, antithetic_view, area_proxy, make_stream, sample_coupled
from .mlmc import LevelStats, MlmcConfig, MlmcNotConverged, MlmcResult, allocate_samples, run_mlmc
from .model import FhnParams, Payoff, SdeModel, commutativity_defect, fhn_model, gbm_model
from .scheme import Base, Modification, SchemeDivergence, SchemeSpec, get_scheme, mm_step, project

__all__ = [
    "Base", "CoupledIncrements", "FhnParams", "LevelStats", "MlmcConfig", "MlmcNotConverged",
    "MlmcResult", "Modification", "Payoff", "RngStream", "SchemeDivergence", "SchemeSpec",
    "SdeModel", "allocate_samples", "antithetic_view", "area_proxy", "commutativity_defect",
    "fhn_model", "gbm_model", "get_scheme", "make_stream", "mm_step", "project", "run_mlmc",
    "sample_coupled",
]
