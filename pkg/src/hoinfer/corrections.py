"""Higher-order corrections to the likelihood root.

Tail-area formulas, the nuisance-adjusted correction ``q`` in its several
constructions, adjusted profile likelihoods, the multiparameter ``w*``
statistic and mid-P values for lattice statistics.

All ``q`` constructions share one determinant layout: a ``d x d`` numerator
whose first column is a difference of a local canonical parameter between the
full and constrained fits and whose remaining columns are derivatives in the
nuisance directions, divided by the Jacobian of that canonical parameter at the
full fit and multiplied by ``sqrt(|j(theta_hat)| / |j_lambda_lambda(theta_psi)|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from .core import ConstrainedFit, ModelFit
from .exceptions import (
    InvalidCorrectionError,
    NumericalError,
    SingularInformationError,
    SingularZoneError,
    UnsupportedVariantError,
    ValidationError,
    DomainError,
)

SINGULAR_R = 0.25


@dataclass(frozen=True)
class TailResult:
    """Likelihood root, its correction and the two tail-area approximations."""

    r: float
    q: float
    r_star: float
    p_lr: float
    p_bn: float
    in_unit_interval: bool


@dataclass(frozen=True)
class ModifiedRoot:
    r_star: float
    probability: float


def _check_zone(r: float, threshold: float) -> None:
    if not np.isfinite(r):
        raise ValidationError("r must be finite")
    if abs(r) < threshold or r == 0.0:
        raise SingularZoneError(f"|r| = {abs(r):.3g} is inside the singular zone (< {threshold}); use profile interpolation")


def lugannani_rice(r: float, q: float, *, singular_threshold: float = SINGULAR_R) -> float:
    """Additive tail approximation ``Phi(r) + phi(r) (1/r - 1/q)``.

    The value is returned as computed; it can leave (0, 1) and is never
    clamped.  Use :func:`tail_areas` to obtain the range flag alongside.
    """
    _check_zone(r, singular_threshold)
    if not np.isfinite(q) or q == 0.0:
        raise InvalidCorrectionError(f"q must be finite and nonzero (got {q})")
    return float(norm.cdf(r) + norm.pdf(r) * (1.0 / r - 1.0 / q))


def barndorff_nielsen(r: float, q: float, *, singular_threshold: float = SINGULAR_R) -> ModifiedRoot:
    """Modified likelihood root ``r + log(q / r) / r`` and its normal tail area."""
    _check_zone(r, singular_threshold)
    if not np.isfinite(q) or r * q <= 0:
        raise InvalidCorrectionError(f"r = {r:.6g} and q = {q:.6g} do not share a sign")
    rs = r + np.log(q / r) / r
    return ModifiedRoot(float(rs), float(norm.cdf(rs)))


def modified_root(r, q):
    """Vectorized ``r*`` returning NaN where it is undefined (``r q <= 0``)."""
    r = np.asarray(r, float)
    q = np.asarray(q, float)
    out = np.full(np.broadcast(r, q).shape, np.nan)
    ok = (r * q) > 0
    rb, qb = np.broadcast_arrays(r, q)
    out[ok] = rb[ok] + np.log(qb[ok] / rb[ok]) / rb[ok]
    return out if out.ndim else float(out)


def tail_areas(r: float, q: float, *, singular_threshold: float = SINGULAR_R) -> TailResult:
    p_lr = lugannani_rice(r, q, singular_threshold=singular_threshold)
    bn = barndorff_nielsen(r, q, singular_threshold=singular_threshold)
    return TailResult(float(r), float(q), bn.r_star, p_lr, bn.probability, 0.0 < p_lr < 1.0)


@dataclass(frozen=True)
class QIngredients:
    """Evaluators needed by the ``q`` constructions.

    Only the fields used by the chosen construction must be supplied.

    Attributes
    ----------
    variant : str
        One of ``"canonical-expfam"``, ``"tangent-frame"``,
        ``"sample-space-exact"`` and ``"skovgaard"``.
    phi, phi_dtheta : callable
        Local canonical parameter ``theta -> (d,)`` and its Jacobian
        ``theta -> (d, d)`` (rows index the canonical parameter).
    phi_dlambda : callable, optional
        Nuisance columns of ``phi_dtheta``; derived when omitted.
    ss_grad, ss_mixed : callable
        Sample-space derivatives ``l_{;theta_hat}(theta)`` (length d) and
        ``l_{theta;theta_hat}(theta)`` (rows: sample space, columns: parameter).
    S, Q : callable
        Score covariances ``S(theta1, theta2)`` (d x d) and
        ``Q(theta1, theta2)`` (length d).
    exp_info : callable
        Expected information ``i(theta)``.
    """

    variant: str
    phi: Callable | None = None
    phi_dtheta: Callable | None = None
    phi_dlambda: Callable | None = None
    ss_grad: Callable | None = None
    ss_mixed: Callable | None = None
    S: Callable | None = None
    Q: Callable | None = None
    exp_info: Callable | None = None
    extras: dict = field(default_factory=dict)


def _logdet_pd(A: np.ndarray, name: str) -> float:
    if A.size == 0:
        return 0.0
    sign, ld = np.linalg.slogdet(A)
    if sign <= 0:
        raise SingularInformationError(name, "determinant not positive")
    return float(ld)


def information_ratio(fit: ModelFit, cfit: ConstrainedFit) -> float:
    """``sqrt(|j(theta_hat)| / |j_lambda_lambda(theta_psi)|)``."""
    ld_full = _logdet_pd(fit.obs_info, "j")
    ld_nuis = _logdet_pd(cfit.block("lambda", "lambda"), "j_lambda_lambda")
    return float(np.exp(0.5 * (ld_full - ld_nuis)))


def _q_from_blocks(diff: np.ndarray, mixed: np.ndarray, jacobian_hat: np.ndarray, fit: ModelFit, cfit: ConstrainedFit) -> float:
    part = cfit.partition
    if part.d0 != 1:
        raise ValidationError("q is defined for scalar interest; use multiparameter_u for vectors")
    num = np.column_stack([diff, mixed[:, list(part.nuisance)]])
    den = np.linalg.det(jacobian_hat[:, part.order])
    if not np.isfinite(den) or den == 0.0:
        raise NumericalError("reparametrization Jacobian is singular at the full fit")
    return float(np.linalg.det(num) / den * information_ratio(fit, cfit))


def q_general(ingredients: QIngredients, fit: ModelFit, cfit: ConstrainedFit) -> float:
    """``q`` from a local canonical parameter ``phi(theta)``."""
    if ingredients.phi is None or ingredients.phi_dtheta is None:
        raise UnsupportedVariantError("q_general needs phi and phi_dtheta")
    diff = np.asarray(ingredients.phi(fit.theta)) - np.asarray(ingredients.phi(cfit.theta))
    mixed = np.asarray(ingredients.phi_dtheta(cfit.theta), float)
    if ingredients.phi_dlambda is not None:
        mixed = mixed.copy()
        mixed[:, list(cfit.partition.nuisance)] = ingredients.phi_dlambda(cfit.theta)
    return _q_from_blocks(diff, mixed, np.asarray(ingredients.phi_dtheta(fit.theta), float), fit, cfit)


def q_sample_space(ingredients: QIngredients, fit: ModelFit, cfit: ConstrainedFit) -> float:
    """``q`` from exact sample-space derivatives with the ancillary held fixed."""
    if ingredients.ss_grad is None or ingredients.ss_mixed is None:
        raise UnsupportedVariantError("q_sample_space needs exact sample-space derivative evaluators")
    diff = np.asarray(ingredients.ss_grad(fit.theta)) - np.asarray(ingredients.ss_grad(cfit.theta))
    mixed = np.asarray(ingredients.ss_mixed(cfit.theta), float)
    return _q_from_blocks(diff, mixed, np.asarray(ingredients.ss_mixed(fit.theta), float), fit, cfit)


def _skovgaard_pieces(ingredients: QIngredients, fit: ModelFit, cfit: ConstrainedFit):
    """Equilibrated ``i, j, S, Q, j_lambda_lambda(theta_psi)``.

    Coordinates are rescaled by ``1 / sqrt(diag i(theta_hat))``.  ``q`` and
    ``u`` are invariant under this change of scale, and it removes most of the
    ill-conditioning caused by parameters of very different magnitudes.
    """
    if ingredients.S is None or ingredients.Q is None or ingredients.exp_info is None:
        raise UnsupportedVariantError("the Skovgaard construction needs S, Q and the expected information")
    i_hat = np.asarray(ingredients.exp_info(fit.theta), float)
    diag = np.diag(i_hat)
    if not np.all(diag > 0):
        raise SingularInformationError("i", "expected information at the full fit")
    d = 1.0 / np.sqrt(diag)
    i_hat = i_hat * np.outer(d, d)
    try:
        np.linalg.cholesky(i_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError("i", "expected information at the full fit") from exc
    j_hat = fit.obs_info * np.outer(d, d)
    S = np.asarray(ingredients.S(fit.theta, cfit.theta), float) * np.outer(d, d)
    Q = np.asarray(ingredients.Q(fit.theta, cfit.theta), float) * d
    lam = list(cfit.partition.nuisance)
    j_ll = cfit.block("lambda", "lambda") * np.outer(d[lam], d[lam])
    return i_hat, j_hat, S, Q, j_ll


def q_skovgaard(ingredients: QIngredients, fit: ModelFit, cfit: ConstrainedFit) -> float:
    """``q`` with sample-space derivatives replaced by score covariances.

    Uses ``l_{;theta_hat}(theta_hat) - l_{;theta_hat}(theta_psi) ~ i^-1 j Q`` and
    ``l_{theta;theta_hat}(theta_psi) ~ i^-1 j S``.
    """
    part = cfit.partition
    if part.d0 != 1:
        raise ValidationError("q is defined for scalar interest; use multiparameter_u for vectors")
    i_hat, j_hat, S, Q, j_ll = _skovgaard_pieces(ingredients, fit, cfit)
    A = np.linalg.solve(i_hat, j_hat)
    num = np.column_stack([A @ Q, (A @ S)[:, list(part.nuisance)]])
    den = np.linalg.det(j_hat[:, part.order])
    if not np.isfinite(den) or den == 0.0:
        raise NumericalError("observed information is singular at the full fit")
    ratio = np.exp(0.5 * (_logdet_pd(j_hat, "j") - _logdet_pd(j_ll, "j_lambda_lambda")))
    return float(np.linalg.det(num) / den * ratio)


def multiparameter_u(ingredients: QIngredients, fit: ModelFit, cfit: ConstrainedFit, w: float) -> float:
    """Correction factor ``u`` for ``w*`` with vector interest.

    The displacement ``delta = S^-1 Q`` plays the role of ``theta_hat - theta_psi``;
    its interest block is measured in the metric of ``j_p(psi_hat)`` and the
    volume factor ``|i| |j_lambda_lambda(theta_psi)|^{1/2} / (|S| |j|^{1/2})``
    is the same one that appears in the scalar ``q``.  For one interest
    coordinate this equals ``r / q`` from :func:`q_skovgaard` exactly.
    """
    part = cfit.partition
    idx = list(part.interest)
    i_hat, j_hat, S, Q, j_ll = _skovgaard_pieces(ingredients, fit, cfit)
    delta = np.linalg.solve(S, Q)[idx]
    H = np.linalg.inv(np.linalg.inv(j_hat)[np.ix_(idx, idx)])
    quad = float(delta @ H @ delta)
    if w <= 0 or quad <= 0:
        raise InvalidCorrectionError("u undefined at the maximum likelihood estimate")
    sign_S, ld_S = np.linalg.slogdet(S)
    if sign_S == 0:
        raise SingularInformationError("S", "score covariance singular")
    ld = (
        0.5 * part.d0 * (np.log(w) - np.log(quad))
        + 0.5 * _logdet_pd(H, "j_p")
        + _logdet_pd(i_hat, "i")
        + 0.5 * _logdet_pd(j_ll, "j_lambda_lambda")
        - ld_S
        - 0.5 * _logdet_pd(j_hat, "j")
    )
    # S^-1 Q and the volume ratio carry signs; for d0 = 1 they combine with sign(r)
    sign = sign_S * (np.sign(delta[0]) if part.d0 == 1 else 1.0)
    if part.d0 == 1:
        sign *= np.sign(fit.theta[part.interest[0]] - cfit.psi[0])
    if sign <= 0:
        raise InvalidCorrectionError("u is not positive")
    return float(np.exp(ld))


def w_star(w: float, u: float) -> float:
    """Adjusted likelihood-ratio statistic ``w (1 - log(u) / w)^2``."""
    if u <= 0 or not np.isfinite(u):
        raise InvalidCorrectionError(f"u must be positive (got {u})")
    if w < 0:
        raise ValidationError("w must be nonnegative")
    if w == 0:
        return 0.0
    return float(w * (1.0 - np.log(u) / w) ** 2)


def midp_significance(support, pmf, x: float) -> float:
    """Mid-P value ``pr(X < x) + pr(X = x) / 2`` of a lattice distribution."""
    support = np.asarray(support, float)
    pmf = np.asarray(pmf, float)
    hit = np.isclose(support, x, rtol=0, atol=1e-9)
    if not hit.any():
        raise DomainError(f"{x} is not a support point")
    return float(pmf[support < x - 1e-9].sum() + 0.5 * pmf[hit].sum())


@dataclass(frozen=True)
class AdjustedProfile:
    """Adjusted profile log likelihood ``l_a = l_p + log M`` on a scalar grid."""

    psi: np.ndarray
    lp: np.ndarray
    log_m: np.ndarray
    variant: str
    psi_hat_a: float
    se_a: float
    la_max: float
    spline: CubicSpline = field(repr=False)

    @property
    def la_values(self) -> np.ndarray:
        return self.lp + self.log_m

    def la(self, psi):
        return self.spline(psi)

    def correction(self, psi):
        """``M(psi)`` relative to its value at the first grid point."""
        return np.exp(np.interp(psi, self.psi, self.log_m) - self.log_m[0])

    def r_a(self, psi):
        la = self.spline(psi)
        return np.sign(self.psi_hat_a - np.asarray(psi)) * np.sqrt(np.maximum(2.0 * (self.la_max - la), 0.0))

    @property
    def wald_zero(self) -> float:
        """Adjusted Wald statistic for ``psi = 0``."""
        return self.psi_hat_a / self.se_a


def adjusted_profile(psi, lp, log_m, variant: str) -> AdjustedProfile:
    """Build an :class:`AdjustedProfile` from grid values.

    Non-finite entries (points where the adjustment is undefined) are dropped.
    The maximizer and its standard error come from a natural cubic spline of
    ``l_a`` through the remaining points.
    """
    psi = np.asarray(psi, float)
    lp = np.asarray(lp, float)
    log_m = np.asarray(log_m, float)
    ok = np.isfinite(psi) & np.isfinite(lp) & np.isfinite(log_m)
    if ok.sum() < 5:
        raise NumericalError("fewer than five grid points with a defined adjustment")
    psi, lp, log_m = psi[ok], lp[ok], log_m[ok]
    la = lp + log_m
    spline = CubicSpline(psi, la, bc_type="natural")
    k = int(np.argmax(la))
    lo, hi = psi[max(k - 1, 0)], psi[min(k + 1, len(psi) - 1)]
    res = minimize_scalar(lambda v: -float(spline(v)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(1.0, hi - lo)})
    top = float(res.x)
    curv = -float(spline(top, 2))
    if curv <= 0:
        raise NumericalError("adjusted profile has no interior maximum on the grid")
    return AdjustedProfile(psi, lp, log_m, variant, top, 1.0 / np.sqrt(curv), float(spline(top)), spline)
