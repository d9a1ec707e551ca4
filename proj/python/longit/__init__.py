"""Incomplete longitudinal binary outcomes: GEE, weighted GEE and random-intercept GLMM."""

from ._longit import (
    DataError,
    LongDataset,
    NumericalError,
    attenuation_ratio,
    complete_case,
    endpoint_analysis,
    fisher_exact,
    fit_gee,
    fit_glmm,
    fit_logistic,
    fit_wgee,
    gauss_hermite,
    load_csv,
    locf_impute,
    marginalize_mean,
    monotonize,
    pattern_table,
    pearson_chi2,
    replicate_study,
    run_cli,
    simulate,
    subject_loglik,
    wald_test,
)

__all__ = [
    "DataError",
    "LongDataset",
    "NumericalError",
    "attenuation_ratio",
    "complete_case",
    "endpoint_analysis",
    "fisher_exact",
    "fit_gee",
    "fit_glmm",
    "fit_logistic",
    "fit_wgee",
    "gauss_hermite",
    "load_csv",
    "locf_impute",
    "marginalize_mean",
    "monotonize",
    "pattern_table",
    "pearson_chi2",
    "replicate_study",
    "run_cli",
    "simulate",
    "subject_loglik",
    "wald_test",
]
