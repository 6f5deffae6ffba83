"""Regression-scale models ``y = X beta + sigma e`` with a known error law.

Parameters are ``theta = (beta, tau)`` with ``tau = log sigma``.  Given the
maximum likelihood estimate, the standardized residuals
``a = (y - X beta_hat) / sigma_hat`` are an exact ancillary, and inference
conditions on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ConstrainedFit, ModelFit, ModelSpec, ParamPartition, maximize_likelihood
from ..corrections import QIngredients, q_general, q_sample_space
from ..exceptions import DomainError, ValidationError
from ..profiling import GridSpec, PivotProfile, build_profile
from .laws import ErrorLaw


def _check_design(y: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, float).ravel()
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != len(y):
        raise ValidationError("X and y have different numbers of rows")
    if len(y) <= X.shape[1]:
        raise ValidationError("need more observations than coefficients")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValidationError("X is not of full column rank")
    return y, X


def rsm_model(y, X, law: ErrorLaw, names: Sequence[str] | None = None) -> ModelSpec:
    """Log likelihood ``-n tau - sum g0((y - X beta) / sigma)`` on ``(beta, tau)``."""
    y, X = _check_design(y, X)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"beta{j}" for j in range(p))
    names = names + ("log_sigma",)

    def resid(theta):
        sigma = np.exp(theta[p])
        return (y - X @ theta[:p]) / sigma, sigma

    def loglik(theta):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            e, _ = resid(theta)
            val = float(-n * theta[p] - np.sum(law.g0(e)))
        return val if np.isfinite(val) else -np.inf

    def score(theta):
        e, sigma = resid(theta)
        d1 = law.g0_d1(e)
        return np.concatenate([X.T @ d1 / sigma, [-n + np.sum(d1 * e)]])

    def obs_info(theta):
        e, sigma = resid(theta)
        d1, d2 = law.g0_d1(e), law.g0_d2(e)
        J = np.empty((p + 1, p + 1))
        J[:p, :p] = (X.T * d2) @ X / sigma**2
        J[:p, p] = J[p, :p] = X.T @ (d2 * e + d1) / sigma
        J[p, p] = np.sum(d2 * e**2 + d1 * e)
        return J

    def evaluate(theta):
        e, sigma = resid(theta)
        d1, d2 = law.g0_d1(e), law.g0_d2(e)
        ll = float(-n * theta[p] - np.sum(law.g0(e)))
        g = np.concatenate([X.T @ d1 / sigma, [-n + np.sum(d1 * e)]])
        J = np.empty((p + 1, p + 1))
        J[:p, :p] = (X.T * d2) @ X / sigma**2
        J[:p, p] = J[p, :p] = X.T @ (d2 * e + d1) / sigma
        J[p, p] = np.sum(d2 * e**2 + d1 * e)
        return ll, g, J

    return ModelSpec(
        dim=p + 1, loglik=loglik, score=score, obs_info=obs_info,
        partition=ParamPartition.from_interest(p, p + 1), names=names,
        scales=("identity",) * p + ("identity",), evaluate=evaluate,
    )


@dataclass(frozen=True)
class AncillaryConfig:
    """Standardized residuals of a fitted regression-scale model."""

    a: np.ndarray

    def reconstruct(self, X: np.ndarray, beta: np.ndarray, sigma: float) -> np.ndarray:
        """Response vector with the given estimates and this configuration."""
        return np.asarray(X, float) @ beta + sigma * self.a


def _start(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ beta
    scale = np.sqrt(np.mean(res**2))
    if scale <= 0:
        scale = 1.0
    return np.concatenate([beta, [np.log(scale)]])


def fit_rsm(y, X, law: ErrorLaw, *, start: Sequence[float] | None = None, names=None) -> tuple[ModelFit, AncillaryConfig]:
    """Maximum likelihood fit and the ancillary configuration.

    For heavy-tailed laws the least-squares start is refined by a median
    based start if Newton fails from the former.
    """
    y, X = _check_design(y, X)
    model = rsm_model(y, X, law, names)
    p = X.shape[1]
    fit = maximize_likelihood(model, _start(y, X) if start is None else np.asarray(start, float))
    if not fit.converged and start is None:
        res = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        alt = _start(y, X)
        alt[p] = np.log(np.median(np.abs(res - np.median(res))) + 1e-12)
        fit2 = maximize_likelihood(model, alt)
        if fit2.converged:
            fit = fit2
    sigma = np.exp(fit.theta[p])
    a = (y - X @ fit.theta[:p]) / sigma
    return fit, AncillaryConfig(a)


def tangent_frame(X, a) -> np.ndarray:
    """Tangent directions ``V = [X, a]`` from the standardized-residual pivot.

    Row ``i`` is ``(x_i, a_i)``.  The columns correspond to ``beta`` and to
    ``sigma``; ``q`` is unchanged by rescaling columns, so the ``sigma`` column
    serves equally for ``tau = log sigma``.
    """
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([X, np.asarray(a, float)])


def pivot_frame(y, X, theta, pivot) -> np.ndarray:
    """Tangent directions ``-(dz/dy)^-1 dz/dtheta`` for an arbitrary pivot.

    ``pivot(y, theta)`` returns one pivotal value per observation, each
    depending on its own ``y_i`` only.  Derivatives are central differences.
    """
    y = np.asarray(y, float)
    theta = np.asarray(theta, float)
    h = np.finfo(float).eps ** (1 / 3)
    dz_dy = np.empty(len(y))
    for i in range(len(y)):
        e = np.zeros_like(y)
        e[i] = h * max(1.0, abs(y[i]))
        dz_dy[i] = (pivot(y + e, theta)[i] - pivot(y - e, theta)[i]) / (2 * e[i])
    dz_dt = np.empty((len(y), len(theta)))
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = h * max(1.0, abs(theta[j]))
        dz_dt[:, j] = (pivot(y, theta + e) - pivot(y, theta - e)) / (2 * e[j])
    return -dz_dt / dz_dy[:, None]


def _loglik_y(y, X, law, theta):
    """``dl/dy`` and ``d^2 l / dy dtheta`` (rows: observations)."""
    p = X.shape[1]
    sigma = np.exp(theta[p])
    e = (y - X @ theta[:p]) / sigma
    d1, d2 = law.g0_d1(e), law.g0_d2(e)
    ly = -d1 / sigma
    lyt = np.column_stack([X * (d2 / sigma**2)[:, None], (d2 * e + d1) / sigma])
    return ly, lyt


def frame_ingredients(y, X, law: ErrorLaw, V: np.ndarray) -> QIngredients:
    """Local canonical parameter ``phi(theta) = V' dl/dy(theta)``."""
    law.require_smooth()
    y, X = _check_design(y, X)
    V = np.asarray(V, float)
    return QIngredients(
        "tangent-frame",
        phi=lambda th: V.T @ _loglik_y(y, X, law, th)[0],
        phi_dtheta=lambda th: V.T @ _loglik_y(y, X, law, th)[1],
    )


def sample_space_ingredients(X, law: ErrorLaw, theta_hat, a) -> QIngredients:
    """Exact sample-space derivatives of ``l(theta; theta_hat, a)``.

    The data are written as ``y = X beta_hat + exp(tau_hat) a`` and the log
    likelihood is differentiated in ``(beta_hat, tau_hat)`` directly.
    """
    law.require_smooth()
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[1]
    beta_hat = np.asarray(theta_hat[:p], float)
    sig_hat = float(np.exp(theta_hat[p]))
    a = np.asarray(a, float)

    def parts(theta):
        sigma = np.exp(theta[p])
        e = (X @ (beta_hat - theta[:p]) + sig_hat * a) / sigma
        return e, sigma, law.g0_d1(e), law.g0_d2(e)

    def ss_grad(theta):
        e, sigma, d1, _ = parts(theta)
        return np.concatenate([-X.T @ d1 / sigma, [-np.sum(d1 * sig_hat * a) / sigma]])

    def ss_mixed(theta):
        # rows: (beta_hat, tau_hat); columns: (beta, tau)
        e, sigma, d1, d2 = parts(theta)
        M = np.empty((p + 1, p + 1))
        M[:p, :p] = (X.T * d2) @ X / sigma**2
        M[:p, p] = X.T @ (d2 * e + d1) / sigma
        M[p, :p] = (X.T @ (d2 * sig_hat * a)) / sigma**2
        M[p, p] = np.sum((d2 * e + d1) * sig_hat * a) / sigma
        return M

    return QIngredients("sample-space-exact", ss_grad=ss_grad, ss_mixed=ss_mixed)


def q_tangent_frame(fit: ModelFit, cfit: ConstrainedFit, y, X, law: ErrorLaw, V: np.ndarray | None = None) -> float:
    """``q`` from the tangent-frame local parametrization."""
    y, X = _check_design(y, X)
    if V is None:
        p = X.shape[1]
        a = (y - X @ fit.theta[:p]) / np.exp(fit.theta[p])
        V = tangent_frame(X, a)
    return q_general(frame_ingredients(y, X, law, V), fit, cfit)


def q_exact_ancillary(fit: ModelFit, cfit: ConstrainedFit, X, law: ErrorLaw, a) -> float:
    return q_sample_space(sample_space_ingredients(X, law, fit.theta, a), fit, cfit)


def rsm_profile(y, X, law: ErrorLaw, interest: int | str, *, grid: GridSpec | None = None, fit: ModelFit | None = None, names=None) -> PivotProfile:
    """Pivot profile of one coefficient or of ``log_sigma``."""
    law.require_smooth()
    y, X = _check_design(y, X)
    model = rsm_model(y, X, law, names)
    if fit is None:
        fit, anc = fit_rsm(y, X, law, names=names)
    p = X.shape[1]
    a = (y - X @ fit.theta[:p]) / np.exp(fit.theta[p])
    ingr = frame_ingredients(y, X, law, tangent_frame(X, a))
    return build_profile(model, fit, interest, q_func=lambda f, c: q_general(ingr, f, c), grid=grid)


def log_conditional_density_pivots(z1, z2, a, X, law: ErrorLaw) -> float:
    """Log of ``z2^(n-1) prod f((x_i' z1 + a_i) z2) |X'X|^(1/2)`` (no normalizing constant)."""
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    if z2 <= 0:
        raise DomainError("z2 must be positive")
    n = X.shape[0]
    arg = (X @ np.atleast_1d(z1) + np.asarray(a)) * z2
    return float((n - 1) * np.log(z2) - np.sum(law.g0(arg)) + 0.5 * np.linalg.slogdet(X.T @ X)[1])


def conditional_density_pivots(z1, z2, a, X, law: ErrorLaw) -> float:
    return float(np.exp(log_conditional_density_pivots(z1, z2, a, X, law)))


def log_conditional_density_mles(beta_hat, sigma_hat, a, X, law: ErrorLaw, beta0, sigma0) -> float:
    """Log density of ``(beta_hat, sigma_hat)`` given ``a`` up to the constant ``c(a)``."""
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    if sigma_hat <= 0 or sigma0 <= 0:
        raise DomainError("scale values must be positive")
    n, p = X.shape
    arg = (X @ (np.atleast_1d(beta_hat) - np.atleast_1d(beta0)) + sigma_hat * np.asarray(a)) / sigma0
    return float(
        (n - p - 1) * np.log(sigma_hat) - n * np.log(sigma0) - np.sum(law.g0(arg)) + 0.5 * np.linalg.slogdet(X.T @ X)[1]
    )


def conditional_density_mles(beta_hat, sigma_hat, a, X, law: ErrorLaw, beta0, sigma0) -> float:
    return float(np.exp(log_conditional_density_mles(beta_hat, sigma_hat, a, X, law, beta0, sigma0)))
