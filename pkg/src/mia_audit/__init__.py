"""Membership-inference vulnerability evaluation toolkit.

Estimates per-sample in/out Gaussian statistics from model-by-sample score
grids, calibrates per-sample false positive rates via post-processing before
concatenation, reports TPR at fixed low FPR under six strategies, and ships
an analytical simulator for the finite-population bias of shadow-model
variance estimates.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibratedGrid,
    DecompositionCheck,
    EvalRow,
    Evaluator,
    Strategy,
    analytic_tpr_unequal_variance,
    concat_decomposition_check,
    evaluate,
    per_sample_fpr_distribution,
    standardize,
)
from .fp_sim import RatioSummary, SimConfig, SimResult, analytic_sigma, ratio_summary, simulate
from .grid import GridFormatError, MiaGrid, load_grid, save_grid, subset_models
from .numerics import (
    MomentAccumulator,
    empirical_quantile,
    fit_student_t_df,
    loo_downdate,
    normal_cdf,
    normal_quantile,
    student_t_cdf,
    student_t_quantile,
)
from .shadow_stats import (
    EstimationMode,
    LeaveOneOut,
    LooStats,
    Oracle,
    PerSampleStats,
    Pooled,
    apply_fpc,
    estimate_stats,
    fpc_factor,
    lira_score,
)
from .tradeoff import (
    TradeoffCurve,
    check_postprocessing_invariance,
    empirical_tradeoff,
    gaussian_tradeoff,
    gaussian_tradeoff_curve,
)

__all__ = [
    "__version__",
    "MiaGrid",
    "GridFormatError",
    "load_grid",
    "save_grid",
    "subset_models",
    "MomentAccumulator",
    "loo_downdate",
    "normal_cdf",
    "normal_quantile",
    "student_t_cdf",
    "student_t_quantile",
    "fit_student_t_df",
    "empirical_quantile",
    "Pooled",
    "LeaveOneOut",
    "Oracle",
    "EstimationMode",
    "PerSampleStats",
    "LooStats",
    "estimate_stats",
    "apply_fpc",
    "fpc_factor",
    "lira_score",
    "Strategy",
    "CalibratedGrid",
    "EvalRow",
    "Evaluator",
    "standardize",
    "evaluate",
    "per_sample_fpr_distribution",
    "concat_decomposition_check",
    "DecompositionCheck",
    "analytic_tpr_unequal_variance",
    "TradeoffCurve",
    "empirical_tradeoff",
    "gaussian_tradeoff",
    "gaussian_tradeoff_curve",
    "check_postprocessing_invariance",
    "SimConfig",
    "SimResult",
    "RatioSummary",
    "simulate",
    "analytic_sigma",
    "ratio_summary",
]
