"""Regression-scale models with nonnormal errors."""

from .laws import CAUCHY, LAPLACE, LAWS, LOGISTIC, LOGWEIBULL, NORMAL, ErrorLaw, get_law, student_t
from .model import (
    AncillaryConfig,
    conditional_density_mles,
    conditional_density_pivots,
    fit_rsm,
    frame_ingredients,
    log_conditional_density_mles,
    log_conditional_density_pivots,
    pivot_frame,
    q_exact_ancillary,
    q_tangent_frame,
    rsm_model,
    rsm_profile,
    sample_space_ingredients,
    tangent_frame,
)
from .quadrature import QuadratureResult, quadrature_oracle

__all__ = [
    "AncillaryConfig", "CAUCHY", "ErrorLaw", "LAPLACE", "LAWS", "LOGISTIC", "LOGWEIBULL", "NORMAL", "QuadratureResult",
    "conditional_density_mles", "conditional_density_pivots", "fit_rsm", "frame_ingredients", "get_law",
    "log_conditional_density_mles", "log_conditional_density_pivots", "pivot_frame", "q_exact_ancillary",
    "q_tangent_frame", "quadrature_oracle", "rsm_model", "rsm_profile", "sample_space_ingredients", "student_t",
    "tangent_frame",
]
