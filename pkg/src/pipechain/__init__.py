"""Markov-chain degradation models for multi-state pipe networks."""

from .chain import (
    ARCS,
    ChainParams,
    StateProbabilityCurve,
    TransitionMatrixSeries,
    build_generator,
    hdtmc_evolve,
    hdtmc_step_matrix,
    solve_master,
    survival_curve,
    transition_matrix,
)
from .data import CohortDataset, CohortSpec, InspectionRecord, build_cohort, load_inspections, simulate_cohort
from .hazards import HazardFamily, HazardSpec, cumulative_hazard, hazard_rate
from .inference import (
    CountTable,
    FitReport,
    McmcConfig,
    SqpConfig,
    build_counts,
    fit,
    log_likelihood,
    mh_sample,
    sqp_refine,
)
from .metrics import MetricSet, aic, bic, rmse, split
from .turnbull import CensoredInterval, TurnbullCurve, binarize, turnbull_fit, turnbull_state_probs

__version__ = "0.1.0"

__all__ = [
    "ARCS",
    "ChainParams",
    "CohortDataset",
    "CohortSpec",
    "CountTable",
    "CensoredInterval",
    "FitReport",
    "HazardFamily",
    "HazardSpec",
    "InspectionRecord",
    "McmcConfig",
    "MetricSet",
    "SqpConfig",
    "StateProbabilityCurve",
    "TransitionMatrixSeries",
    "TurnbullCurve",
    "aic",
    "bic",
    "binarize",
    "build_cohort",
    "build_counts",
    "build_generator",
    "cumulative_hazard",
    "fit",
    "hazard_rate",
    "hdtmc_evolve",
    "hdtmc_step_matrix",
    "load_inspections",
    "log_likelihood",
    "mh_sample",
    "rmse",
    "simulate_cohort",
    "solve_master",
    "split",
    "sqp_refine",
    "survival_curve",
    "transition_matrix",
    "turnbull_fit",
    "turnbull_state_probs",
    "__version__",
]
