"""Nonlinear heteroscedastic Gaussian regression."""

from .autodiff import Expression, Jet, derivative_engine, fd_jet
from .contour import ContourSet, nlreg_contour, wstar_contour
from .model import (
    LOGISTIC4_START,
    SIGMA2,
    MplEstimate,
    NLModel,
    errinvar_variance,
    fit_nlreg,
    log_adjustment_nlreg,
    log_logistic4_mean,
    logistic4_errinvar_model,
    logistic4_mean,
    mpl_estimates,
    rstar_profile_nlreg,
)

__all__ = [
    "Expression", "Jet", "derivative_engine", "fd_jet", "ContourSet", "nlreg_contour", "wstar_contour",
    "LOGISTIC4_START", "SIGMA2", "MplEstimate", "NLModel", "errinvar_variance", "fit_nlreg",
    "log_adjustment_nlreg", "log_logistic4_mean", "logistic4_errinvar_model", "logistic4_mean",
    "mpl_estimates", "rstar_profile_nlreg",
]
