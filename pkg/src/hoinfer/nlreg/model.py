"""Nonlinear heteroscedastic Gaussian regression ``y_ij = mu(x_i; beta) + w(x_i; beta, rho) e_ij``.

Working parameters are ``beta`` (natural scale unless listed as positive),
the variance parameters ``rho`` and ``log_sigma2``.  Positive parameters are
optimized on the log scale.  All likelihood quantities are computed from
per-design-point means and within-group sums of squares; the observation
level responses are kept for the tangent-frame construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize

from ..core import (
    ConstrainedFit,
    ModelFit,
    ModelSpec,
    constrained_maximize,
    maximize_likelihood,
    natural_derivative,
    profile_information,
    to_natural,
)
from ..corrections import QIngredients, q_general, q_skovgaard
from ..exceptions import (
    AdjustmentUndefinedError,
    DomainError,
    NumericalError,
    SingularInformationError,
    UnsupportedVariantError,
    ValidationError,
)
from ..profiling import GridSpec, PivotProfile, build_profile
from .autodiff import Expression, Jet, exp, fd_jet, log

_LOG_2PI = np.log(2 * np.pi)
SIGMA2 = "log_sigma2"

MeanFn = Callable[[np.ndarray, Mapping[str, object]], object]


def logistic4_mean(x, env):
    """Four-parameter logistic ``b1 + (b2 - b1) / (1 + (x / b4)^b3)``."""
    u = (x / env["b4"]) ** env["b3"]
    return env["b1"] + (env["b2"] - env["b1"]) / (1 + u)


def log_logistic4_mean(x, env):
    """Logarithm of the four-parameter logistic, for log-transformed responses."""
    return log(logistic4_mean(x, env))


def errinvar_variance(x, env):
    """Variance factor ``1 + k x^g (f'(x) / f(x))^2`` with ``f`` the four-parameter logistic.

    ``f'`` is analytic; at ``x = 0`` the factor is one.
    """
    x = np.asarray(x, float)
    u = (x / env["b4"]) ** env["b3"]
    f = env["b1"] + (env["b2"] - env["b1"]) / (1 + u)
    # x^g f'(x)^2 = (b2 - b1)^2 b3^2 x^(g - 2) u^2 / (1 + u)^4
    num = (env["b2"] - env["b1"]) * env["b3"] * u / (1 + u) ** 2
    return 1 + env["k"] * x ** (env["g"] - 2) * (num / f) ** 2


def _expression_fn(text: str, allowed: set[str], covariate: str) -> MeanFn:
    expr = Expression(text, allowed)

    def fn(x, env):
        return expr(dict(env, **{covariate: x}))

    fn.expression = expr
    return fn


@dataclass
class NLModel:
    """Data and structure of a nonlinear heteroscedastic regression.

    Parameters
    ----------
    x : (n,) array_like
        Covariate per observation; replicates share a design point.
    y : (n,) array_like
        Responses.
    mean : callable or str
        ``(x, env) -> mu`` where ``env`` maps parameter names to natural-scale
        values, or an expression in the parameters and ``covariate``.
    variance : callable, str or None
        Relative variance ``w^2 / sigma^2``; ``env`` additionally holds the mean
        as ``"mu"``.  ``None`` means constant variance.
    beta_names, rho_names : sequence of str
        Mean parameters and variance parameters other than ``sigma^2``.
    positive : sequence of str
        Parameters estimated on the log scale.
    covariate : str
        Name of the covariate inside expressions.
    """

    x: np.ndarray
    y: np.ndarray
    mean: MeanFn | str
    variance: MeanFn | str | None
    beta_names: tuple[str, ...]
    rho_names: tuple[str, ...] = ()
    positive: tuple[str, ...] = ()
    covariate: str = "x"
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, float).ravel()
        y = np.asarray(self.y, float).ravel()
        if x.shape != y.shape or x.size == 0:
            raise ValidationError("x and y must be non-empty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("x and y must be finite")
        self.beta_names = tuple(self.beta_names)
        self.rho_names = tuple(self.rho_names)
        self.positive = tuple(self.positive)
        names = self.beta_names + self.rho_names
        if len(set(names)) != len(names) or SIGMA2 in names or "mu" in names:
            raise ValidationError("parameter names must be distinct and not 'log_sigma2' or 'mu'")
        unknown = set(self.positive) - set(names)
        if unknown:
            raise ValidationError(f"positive parameters {sorted(unknown)} are not model parameters")
        allowed = set(names) | {self.covariate}
        if isinstance(self.mean, str):
            self.mean = _expression_fn(self.mean, allowed, self.covariate)
        if isinstance(self.variance, str):
            self.variance = _expression_fn(self.variance, allowed | {"mu"}, self.covariate)
        self.design, inverse, self.counts = np.unique(x, return_inverse=True, return_counts=True)
        self.group = inverse.ravel()
        self.x = x
        self.y = y
        self.ybar = np.bincount(self.group, y) / self.counts
        self.within = np.bincount(self.group, (y - self.ybar[self.group]) ** 2)
        if self.n <= self.dim:
            raise ValidationError(f"{self.n} observations cannot identify {self.dim} parameters")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def names(self) -> tuple[str, ...]:
        return self.beta_names + self.rho_names + (SIGMA2,)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def scales(self) -> tuple[str, ...]:
        return tuple("log" if nm in self.positive else "identity" for nm in self.names)

    # ---- mean and variance jets -------------------------------------------------

    def _env(self, theta):
        jets = Jet.variables(theta, 1)
        env = {}
        for nm, jt in zip(self.names, jets):
            env[nm] = exp(jt) if nm in self.positive else jt
        return env

    def moments(self, theta) -> tuple[Jet, Jet]:
        """Mean and variance jets over the design points at working ``theta``."""
        theta = np.asarray(theta, float)
        key = theta.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        env = self._env(theta)
        x = self.design
        mu = self.mean(x, env)
        d = self.dim
        if not isinstance(mu, Jet):
            mu = Jet.constant(mu, d, len(x))
        mu = mu.broadcast(len(x))
        if self.variance is None:
            factor = Jet.constant(1.0, d, len(x))
        else:
            factor = self.variance(x, dict(env, mu=mu))
            if not isinstance(factor, Jet):
                factor = Jet.constant(factor, d, len(x))
            factor = factor.broadcast(len(x))
        if np.any(~np.isfinite(factor.val)) or np.any(factor.val <= 0):
            bad = np.nonzero(~(factor.val > 0))[0]
            raise DomainError(f"variance not positive at design point(s) x = {self.design[bad].tolist()}")
        v = exp(env[SIGMA2]) * factor
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = (mu, v)
        return mu, v

    def check_derivatives(self, theta, tol: float = 1e-5) -> float:
        """Largest relative discrepancy between jets and central differences."""
        theta = np.asarray(theta, float)
        worst = 0.0
        for k in range(2):
            jet = self.moments(theta)[k]
            ref = fd_jet(lambda t: self.moments(t)[k].val, theta)
            for a, b in ((jet.grad, ref.grad), (jet.hess, ref.hess)):
                scale = np.maximum(1.0, np.abs(b))
                worst = max(worst, float(np.max(np.abs(a - b) / scale)))
        if worst > tol:
            raise NumericalError(f"derivatives disagree with finite differences by {worst:.2e}")
        return worst

    # ---- likelihood -------------------------------------------------------------

    def _loglik_jet(self, theta) -> Jet:
        mu, v = self.moments(theta)
        resid = self.ybar - mu
        per = self.counts * (-0.5 * _LOG_2PI) - 0.5 * self.counts * log(v) - (self.within + self.counts * resid * resid) / (2 * v)
        return per.sum()

    def evaluate(self, theta):
        ll = self._loglik_jet(theta)
        return float(ll.val[0]), ll.grad[:, 0].copy(), -ll.hess[:, :, 0]

    def loglik(self, theta) -> float:
        try:
            return float(self._loglik_jet(theta).val[0])
        except DomainError:
            return -np.inf

    def first_derivatives(self, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``mu, v`` over design points and their gradients ``(m, d)``."""
        mu, v = self.moments(theta)
        return mu.val, v.val, mu.grad.T, v.grad.T

    def exp_info(self, theta) -> np.ndarray:
        return self.score_covariance(theta, theta)

    def score_covariance(self, theta1, theta2) -> np.ndarray:
        """``S(theta1, theta2) = cov_theta1(score(theta1), score(theta2))``."""
        m1, v1, dm1, dv1 = self.first_derivatives(theta1)
        m2, v2, dm2, dv2 = self.first_derivatives(theta2)
        n = self.counts
        delta = m1 - m2
        S = (dm1 * (n / v2)[:, None]).T @ dm2
        S += (dm1 * (n * delta / v2**2)[:, None]).T @ dv2
        S += (dv1 * (n / (2 * v2**2))[:, None]).T @ dv2
        return S

    def score_loglik_covariance(self, theta1, theta2) -> np.ndarray:
        """``Q(theta1, theta2) = cov_theta1(score(theta1), l(theta1) - l(theta2))``."""
        m1, v1, dm1, dv1 = self.first_derivatives(theta1)
        m2, v2, _, _ = self.first_derivatives(theta2)
        n = self.counts
        return dm1.T @ (n * (m1 - m2) / v2) + dv1.T @ (n * 0.5 * (1 / v2 - 1 / v1))

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            dim=self.dim,
            loglik=self.loglik,
            score=lambda t: self.evaluate(t)[1],
            obs_info=lambda t: self.evaluate(t)[2],
            exp_info=self.exp_info,
            names=self.names,
            scales=self.scales,
            evaluate=self.evaluate,
        )

    # ---- tangent frame ----------------------------------------------------------

    def tangent_frame(self, theta_hat) -> np.ndarray:
        """``V = dy/dtheta`` with standardized residuals held fixed, ``(n, d)``."""
        mu, v, dmu, dv = self.first_derivatives(theta_hat)
        g = self.group
        w = np.sqrt(v)
        z = (self.y - mu[g]) / w[g]
        dw = dv / (2 * w)[:, None]
        return dmu[g] + z[:, None] * dw[g]

    def loglik_dy(self, theta) -> np.ndarray:
        mu, v, _, _ = self.first_derivatives(theta)
        g = self.group
        return -(self.y - mu[g]) / v[g]

    def loglik_dy_dtheta(self, theta) -> np.ndarray:
        """``d^2 l / dy dtheta``, ``(n, d)``."""
        mu, v, dmu, dv = self.first_derivatives(theta)
        g = self.group
        resid = self.y - mu[g]
        return dmu[g] / v[g][:, None] + (resid / v[g] ** 2)[:, None] * dv[g]

    def ingredients(self, variant: str, theta_hat=None) -> QIngredients:
        """``q`` ingredients for ``"skovgaard"`` or ``"frw"`` (tangent frame at ``theta_hat``)."""
        variant = _variant(variant)
        if variant == "skovgaard":
            return QIngredients("skovgaard", S=self.score_covariance, Q=self.score_loglik_covariance, exp_info=self.exp_info)
        if theta_hat is None:
            raise ValidationError("the tangent-frame construction needs the full estimate")
        V = self.tangent_frame(theta_hat)
        return QIngredients(
            "tangent-frame",
            phi=lambda t: V.T @ self.loglik_dy(t),
            phi_dtheta=lambda t: V.T @ self.loglik_dy_dtheta(t),
            extras={"V": V},
        )

    def sigma2_given(self, theta) -> float:
        """Closed-form maximizer of ``sigma^2`` with the other parameters fixed."""
        theta = np.array(theta, float)
        theta[-1] = 0.0
        mu, v = self.moments(theta)
        return float(np.sum((self.within + self.counts * (self.ybar - mu.val) ** 2) / v.val) / self.n)


def _variant(variant: str) -> str:
    v = variant.lower()
    if v in ("skovgaard",):
        return "skovgaard"
    if v in ("frw", "fraser-reid-wu", "tangent-frame"):
        return "frw"
    raise UnsupportedVariantError(f"unknown q variant {variant!r}; choose skovgaard or frw")


def _working_start(model: NLModel, start) -> np.ndarray:
    names = model.beta_names + model.rho_names
    if isinstance(start, Mapping):
        missing = [nm for nm in names if nm not in start]
        if missing:
            raise ValidationError(f"start values missing for {missing}")
        vals = [float(start[nm]) for nm in names]
    else:
        vals = [float(v) for v in start]
        if len(vals) != len(names):
            raise ValidationError(f"start must give {len(names)} values for {names}")
    theta = np.zeros(model.dim)
    for i, (nm, v) in enumerate(zip(names, vals)):
        if nm in model.positive:
            if v <= 0:
                raise ValidationError(f"start for positive parameter {nm} must be > 0")
            v = np.log(v)
        theta[i] = v
    s2 = model.sigma2_given(theta)
    if not s2 > 0:
        raise DomainError("closed-form variance start is not positive")
    theta[-1] = np.log(s2)
    return theta


def fit_nlreg(model: NLModel, start, *, gtol: float = 1e-12, max_iter: int = 500) -> ModelFit:
    """Maximum likelihood fit; ``sigma^2`` starts at its closed-form conditional maximizer.

    Parameters
    ----------
    start : mapping or sequence
        Natural-scale starting values for all parameters except ``sigma^2``.
    """
    theta0 = _working_start(model, start)
    return maximize_likelihood(model.model_spec(), theta0, gtol=gtol, max_iter=max_iter)


def rstar_profile_nlreg(
    model: NLModel,
    fit: ModelFit,
    interest: str | int,
    *,
    variant: str = "skovgaard",
    grid: GridSpec | None = None,
    adjust: str | None = None,
) -> PivotProfile:
    """Profile ``r``, ``q`` and ``r*`` for one parameter.

    Grid points within 0.05 standard errors of the estimate are skipped rather
    than bridged.  With ``adjust`` set to ``"m1"`` or ``"m2"`` the adjusted
    profile likelihood is recorded as well.
    """
    spec = model.model_spec()
    v = _variant(variant)
    ingr = model.ingredients(v, fit.theta)
    q_func = (lambda f, c: q_skovgaard(ingr, f, c)) if v == "skovgaard" else (lambda f, c: q_general(ingr, f, c))
    grid = grid or GridSpec(skip=0.05, bridge=False, singular=0.0)
    log_adjust = None
    if adjust is not None:
        log_adjust = lambda f, c: log_adjustment_nlreg(model, f, c, adjust)  # noqa: E731
    return build_profile(spec, fit, interest, q_func=q_func, log_adjust=log_adjust,
                         adjust_variant=adjust or "", grid=grid)


# ---- adjusted profile likelihood for the variance block ---------------------------


def _logdet_abs(A: np.ndarray, what: str) -> float:
    sign, ld = np.linalg.slogdet(A)
    if sign == 0 or not np.isfinite(ld):
        raise AdjustmentUndefinedError(f"{what} is singular")
    return float(ld)


def log_adjustment_nlreg(model: NLModel, fit: ModelFit, cfit: ConstrainedFit, variant: str) -> float:
    """``log M(psi)`` for the variance block with the mean parameters as nuisance.

    ``"m1"`` approximates the sample-space derivative ``l_{lambda;lambda_hat}`` by
    the nuisance block of ``j i^-1 S(theta_hat, theta_psi)``; ``"m2"`` uses the
    tangent frame, ``V_lambda' l_{y lambda}(theta_psi)``.
    """
    lam = list(cfit.partition.nuisance)
    jll = cfit.block("lambda", "lambda")
    sign, ld_j = np.linalg.slogdet(jll)
    if sign <= 0:
        raise AdjustmentUndefinedError("j_lambda_lambda not positive definite")
    key = variant.lower().split("-")[0]
    if key == "m1":
        # rows index theta_hat: l_{theta;theta_hat}' ~ j i^-1 S
        i_hat = model.exp_info(fit.theta)
        mixed = fit.obs_info @ np.linalg.solve(i_hat, model.score_covariance(fit.theta, cfit.theta))
        block = mixed[np.ix_(lam, lam)]
    elif key == "m2":
        V = model.tangent_frame(fit.theta)
        block = V[:, lam].T @ model.loglik_dy_dtheta(cfit.theta)[:, lam]
    else:
        raise UnsupportedVariantError(f"unknown adjustment {variant!r}; choose m1 or m2")
    return 0.5 * ld_j - _logdet_abs(block, "sample-space nuisance block")


@dataclass(frozen=True)
class MplEstimate:
    """Maximizer of the adjusted profile likelihood for a block of parameters.

    Attributes
    ----------
    names : tuple of str
    psi_hat_a : ndarray
        Estimates on the reported scale.
    se_a : ndarray
        Standard errors on the reported scale from the profile information at
        the adjusted estimate.
    psi_working : ndarray
    cov_working : ndarray
    la_max : float
    variant : str
    """

    names: tuple[str, ...]
    psi_hat_a: np.ndarray
    se_a: np.ndarray
    psi_working: np.ndarray
    cov_working: np.ndarray
    la_max: float
    variant: str
    converged: bool

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {nm: {"estimate": float(e), "se": float(s)} for nm, e, s in zip(self.names, self.psi_hat_a, self.se_a)}


def mpl_estimates(
    model: NLModel,
    fit: ModelFit,
    *,
    variant: str = "m1",
    interest: Sequence[str] | None = None,
) -> MplEstimate:
    """Adjusted profile likelihood estimates of the variance parameters.

    Parameters
    ----------
    variant : {"m1", "m2"}
    interest : sequence of str, optional
        Defaults to all variance parameters including ``log_sigma2``.
    """
    if not fit.converged:
        raise ValidationError(f"full fit did not converge: {fit.message}")
    names = tuple(interest) if interest is not None else model.rho_names + (SIGMA2,)
    spec = model.model_spec().with_interest(list(names))
    part = spec.partition
    idx = list(part.interest)
    state = {"start": fit.theta.copy()}

    def la(psi):
        cf = constrained_maximize(spec, psi, state["start"])
        if not cf.converged:
            raise NumericalError(f"constrained fit failed at {psi}: {cf.message}")
        state["start"] = cf.theta
        return cf.loglik + log_adjustment_nlreg(model, fit, cf, variant), cf

    def objective(psi):
        try:
            return -la(psi)[0]
        except (NumericalError, DomainError):
            return np.inf

    psi0 = fit.theta[idx]
    res = optimize.minimize(objective, psi0, method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000, "adaptive": True})
    res = optimize.minimize(objective, res.x, method="BFGS", options={"gtol": 1e-8})
    psi_a = res.x
    value, cf = la(psi_a)
    jp = np.atleast_2d(profile_information(cf))
    try:
        cov = np.linalg.inv(jp)
        if np.any(np.diag(cov) <= 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError("j_p", "at the adjusted estimate") from exc
    scales = [spec.scale_of(i) for i in idx]
    est = np.array([to_natural(sc, p) for sc, p in zip(scales, psi_a)], float)
    se = np.sqrt(np.diag(cov)) * np.array([natural_derivative(sc, p) for sc, p in zip(scales, psi_a)], float)
    return MplEstimate(names, est, se, psi_a, cov, float(value), variant.lower(), bool(res.success or res.status == 2))


# ---- the bundled bioassay model ---------------------------------------------------

LOGISTIC4_START = {"b1": 2.2, "b2": 1700.0, "b3": 2.8, "b4": 0.28, "g": 2.7, "k": 1.0}


def logistic4_errinvar_model(dose, area, *, log_response: bool = True, covariate: str = "dose") -> NLModel:
    """Bioassay model with a four-parameter logistic dose response ``f`` and
    error-in-variables variance ``sigma^2 {1 + k x^g (f'/f)^2}``.

    Parameters
    ----------
    log_response : bool
        If True (default) the response is ``log(area)`` with mean ``log f``;
        otherwise ``area`` itself with mean ``f``.

    ``g`` and ``k`` are estimated on the log scale.
    """
    area = np.asarray(area, float)
    if log_response:
        if np.any(area <= 0):
            raise ValidationError("log response needs positive areas")
        y, mean = np.log(area), log_logistic4_mean
    else:
        y, mean = area, logistic4_mean
    return NLModel(
        x=dose, y=y, mean=mean, variance=errinvar_variance,
        beta_names=("b1", "b2", "b3", "b4"), rho_names=("g", "k"), positive=("g", "k"), covariate=covariate,
    )
