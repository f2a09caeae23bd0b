"""Certified robustness of smoothed image classifiers against geometric deformations."""

from .certify import (
    ABSTAIN,
    CertificationResult,
    CertifyConfig,
    certify_parametric,
    certify_quadrature,
    certify_vectorfield,
    clopper_pearson_lower,
    empirical_attack,
    max_composite_lhs,
    radius_gaussian,
    radius_uniform,
    smoothed_score_quadrature,
)
from .deform import Family, VectorField, field_from_spec
from .grid_image import Image, normalized_grid, warp
from .smoothing import Gaussian, Uniform

__version__ = "0.1.0"
