"""Error laws for regression-scale models, described by ``g0 = -log f``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special, stats

from ..exceptions import UnsupportedVariantError, ValidationError


@dataclass(frozen=True)
class ErrorLaw:
    """Standardized error density through ``g0(e) = -log f(e)`` and two derivatives.

    Attributes
    ----------
    smooth : bool
        False when ``g0`` is not twice differentiable everywhere; such laws
        can be fitted but are refused by the higher-order corrections.
    """

    name: str
    g0: Callable[[np.ndarray], np.ndarray]
    g0_d1: Callable[[np.ndarray], np.ndarray]
    g0_d2: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-np.inf, np.inf)
    smooth: bool = True

    def pdf(self, e):
        return np.exp(-self.g0(e))

    def require_smooth(self) -> None:
        if not self.smooth:
            raise UnsupportedVariantError(f"{self.name} law is not twice differentiable; higher-order corrections unavailable")


_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)

NORMAL = ErrorLaw(
    "normal",
    lambda e: 0.5 * np.square(e) + _LOG_SQRT_2PI,
    lambda e: np.asarray(e, float),
    lambda e: np.ones_like(np.asarray(e, float)),
    stats.norm.cdf,
)

LOGISTIC = ErrorLaw(
    "logistic",
    lambda e: e + 2.0 * np.logaddexp(0.0, -np.asarray(e, float)),
    lambda e: np.tanh(np.asarray(e, float) / 2),
    lambda e: 0.5 / np.cosh(np.asarray(e, float) / 2) ** 2,
    special.expit,
)

CAUCHY = ErrorLaw(
    "cauchy",
    lambda e: np.log(np.pi) + np.log1p(np.square(e)),
    lambda e: 2 * np.asarray(e, float) / (1 + np.square(e)),
    lambda e: 2 * (1 - np.square(e)) / (1 + np.square(e)) ** 2,
    stats.cauchy.cdf,
)

# minimum extreme-value law: log of a standard Weibull variable
LOGWEIBULL = ErrorLaw(
    "logweibull",
    lambda e: np.exp(e) - np.asarray(e, float),
    lambda e: np.expm1(e),
    lambda e: np.exp(e),
    lambda e: -np.expm1(-np.exp(e)),
)

LAPLACE = ErrorLaw(
    "laplace",
    lambda e: np.abs(e) + np.log(2.0),
    lambda e: np.sign(e),
    lambda e: np.zeros_like(np.asarray(e, float)),
    stats.laplace.cdf,
    smooth=False,
)


def student_t(df: float) -> ErrorLaw:
    """Student-t law with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValidationError("degrees of freedom must be positive")
    const = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * np.log(df * np.pi)
    return ErrorLaw(
        f"student_t({df:g})",
        lambda e: 0.5 * (df + 1) * np.log1p(np.square(e) / df) - const,
        lambda e: (df + 1) * np.asarray(e, float) / (df + np.square(e)),
        lambda e: (df + 1) * (df - np.square(e)) / (df + np.square(e)) ** 2,
        lambda e: stats.t.cdf(e, df),
    )


LAWS = {law.name: law for law in (NORMAL, LOGISTIC, CAUCHY, LOGWEIBULL, LAPLACE)}


def get_law(name: str, df: float | None = None) -> ErrorLaw:
    """Look up a law by name; ``"student_t"`` needs ``df``."""
    if name in ("student_t", "t"):
        if df is None:
            raise ValidationError("student_t law needs df")
        return student_t(df)
    try:
        return LAWS[name]
    except KeyError:
        raise ValidationError(f"unknown error law {name!r}; choose from {sorted(LAWS) + ['student_t']}") from None
