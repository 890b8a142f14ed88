"""Estimators of outcome moments and laws under endogenous selection."""

from ._base import EstimatorConfig, LocalPolyConfig, default_bandwidth, resolve_phi
from .api import LocalPolynomialRegressor, PropensityScore
from .directional import DirectionalKDE, directional_density, uniform_hemisphere_density, vmf_kernel
from .fourier import FourierEstimate, FourierGrids, fourier_root, raised_cosine
from .identification import (
    MeanEstimate,
    NonrespondentCDF,
    boundary_limits,
    mean_at_boundary,
    mean_by_integral,
    nonrespondent_cdf,
)
from .local import estimate_propensity, local_linear_nd, local_poly, local_poly_indicator
from .series import SeriesEstimate, projection_sums, series_coefficients

__all__ = [
    "DirectionalKDE",
    "EstimatorConfig",
    "FourierEstimate",
    "FourierGrids",
    "LocalPolyConfig",
    "LocalPolynomialRegressor",
    "MeanEstimate",
    "NonrespondentCDF",
    "PropensityScore",
    "SeriesEstimate",
    "boundary_limits",
    "default_bandwidth",
    "directional_density",
    "estimate_propensity",
    "fourier_root",
    "local_linear_nd",
    "local_poly",
    "local_poly_indicator",
    "mean_at_boundary",
    "mean_by_integral",
    "nonrespondent_cdf",
    "projection_sums",
    "raised_cosine",
    "resolve_phi",
    "series_coefficients",
    "uniform_hemisphere_density",
    "vmf_kernel",
]
