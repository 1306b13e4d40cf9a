"""Grouped-fixed-effects regularized estimation of binary-choice panels.

Fixed-effects logit/probit estimation drops every unit whose outcome
never varies; this package implements the two-step grouped alternative
(k-means on unit covariate means, then one intercept per cluster), which
keeps those units whenever their cluster shows outcome variation, plus
the plug-in average-partial-effect machinery, comparison estimators, and
Monte Carlo / forecasting harnesses built on top.
"""

__version__ = "0.1.0"

from .ape import (
    ApeEstimate,
    delta_method_se,
    half_panel_jackknife_ape,
    partial_effect_continuous,
    partial_effect_discrete,
    plug_in_ape,
)
from .clustering import ClusterResult, KSelection, kmeans, noise_variance, select_K
from .firth import fit_firth
from .forecast import (
    ForecastReport,
    YearForecast,
    choose_cutoff,
    expanding_window_forecast,
    predicted_density_export,
)
from .gfe import GfeResult, estimate_gfe, rule_report
from .links import link_cdf, link_pdf, link_pdf_deriv
from .mle import FitResult, ModelSpec, fit, hessian, loglik, score
from .panel import (
    LAG_COVARIATE,
    PanelDataset,
    SeparationReport,
    add_lagged_outcome,
    detect_separation,
    individual_means,
    load_csv,
    restrict_periods,
    select_covariates,
    write_csv,
)
from .simulate import (
    SimDesign,
    SimReport,
    SimRow,
    draw_panel,
    population_ape,
    register_estimator,
    report_to_csv,
    run_study,
)

__all__ = [
    "ApeEstimate", "ClusterResult", "FitResult", "ForecastReport",
    "GfeResult", "KSelection", "LAG_COVARIATE", "ModelSpec", "PanelDataset",
    "SeparationReport", "SimDesign", "SimReport", "SimRow", "YearForecast",
    "add_lagged_outcome", "choose_cutoff", "delta_method_se",
    "detect_separation", "draw_panel", "estimate_gfe",
    "expanding_window_forecast", "fit", "fit_firth",
    "half_panel_jackknife_ape", "hessian", "individual_means", "kmeans",
    "link_cdf", "link_pdf", "link_pdf_deriv", "load_csv", "loglik",
    "noise_variance", "partial_effect_continuous",
    "partial_effect_discrete", "plug_in_ape", "population_ape",
    "predicted_density_export", "register_estimator", "report_to_csv", "restrict_periods",
    "rule_report", "run_study", "score", "select_K", "select_covariates",
    "write_csv",
]
