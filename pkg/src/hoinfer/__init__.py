"""Higher-order likelihood inference for small samples."""

from .estimators import HigherOrderLogisticRegression, NonlinearHeteroscedasticRegressor, RegressionScaleRegressor
from .exceptions import HoinferError, NumericalError, ValidationError
from .profiling import GridSpec, PivotProfile, build_profile, standard_intervals

__version__ = "0.1.0"

__all__ = [
    "GridSpec", "HigherOrderLogisticRegression", "HoinferError", "NonlinearHeteroscedasticRegressor",
    "NumericalError", "PivotProfile", "RegressionScaleRegressor", "ValidationError", "build_profile",
    "standard_intervals",
]
