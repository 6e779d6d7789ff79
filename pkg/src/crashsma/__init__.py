"""Crash risk estimation on linearly referenced roads.

Spatial multiresolution analysis (circular unnormalized Haar transform with
PURE-selected continuous thresholds), an empirical Bayes baseline, and the
usual hotspot-identification tests.
"""

__version__ = "0.1.0"

from . import _backend
from .data import (
    NetworkDataset,
    SectionSeries,
    aggregate,
    load_crash_csv,
    moving_average,
    write_crash_csv,
)
from .eb import SPFModel, eb_estimate, fit_nb_regression, predict_mu
from .evaluation import EvaluationReport, MethodEstimates, fp_rate, mct, mspe, sct, top_alpha
from .haar import MultiresDecomposition, circular_shift, decompose, max_levels, reconstruct
from .sma import RiskEstimate, bandwidth_histogram, bandwidth_map, sma_estimate
from .synthetic import build_profile, mse_vs_truth, pure_unbiasedness_experiment, sample_counts
from .threshold import ThresholdKind, ThresholdSet, apply_threshold, optimal_threshold, pure_risk

backend = _backend.name
