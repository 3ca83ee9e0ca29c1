"""Conditional density estimation with Bernstein-polynomial normalizing flows."""

from bernflow._core import (
    BernsteinBasis,
    ConfigError,
    DataError,
    DivergenceError,
    DomainError,
    LtmModel,
    ModelConfig,
    OutOfSupportError,
    Scaler,
    TransformParams,
    TransformationModel,
    cdf,
    cpd_export,
    fit,
    fit_ltm,
    gen_toy_bimodal,
    gen_toy_hetero_gaussian,
    gen_toy_sinusoidal,
    grad_check,
    load_csv,
    log_density,
    monotone_from_unconstrained,
    quantile,
    sample,
    test_nll,
    test_nll_ltm,
    toy_hetero_gaussian_analytic_nll,
    transform,
    transform_deriv,
)

__all__ = [
    "BernsteinBasis",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "DomainError",
    "LtmModel",
    "ModelConfig",
    "OutOfSupportError",
    "Scaler",
    "TransformParams",
    "TransformationModel",
    "cdf",
    "cpd_export",
    "fit",
    "fit_ltm",
    "gen_toy_bimodal",
    "gen_toy_hetero_gaussian",
    "gen_toy_sinusoidal",
    "grad_check",
    "load_csv",
    "log_density",
    "monotone_from_unconstrained",
    "quantile",
    "sample",
    "test_nll",
    "test_nll_ltm",
    "toy_hetero_gaussian_analytic_nll",
    "transform",
    "transform_deriv",
]
