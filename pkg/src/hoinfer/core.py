"""Full and constrained maximum likelihood, profile information and first-order pivots.

Models are described by a :class:`ModelSpec`, a bundle of pure evaluators for
the log likelihood, the score and the observed information on a working
parameter scale.  Positive parameters are expected to be represented on the
log scale by the model builder; :attr:`ModelSpec.scales` records this so that
reported values can be mapped back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .exceptions import DomainError, SingularInformationError, ValidationError, NumericalError

GRADIENT_TOL = 1e-10
MAX_ITER = 200
_DIVERGENCE_BOUND = 1e6


@dataclass(frozen=True)
class ParamPartition:
    """Split of the parameter vector into interest and nuisance coordinates."""

    interest: tuple[int, ...]
    nuisance: tuple[int, ...]

    def __post_init__(self):
        both = set(self.interest) | set(self.nuisance)
        if len(self.interest) < 1:
            raise ValidationError("at least one interest coordinate is required")
        if set(self.interest) & set(self.nuisance):
            raise ValidationError("interest and nuisance indices overlap")
        if both != set(range(len(both))):
            raise ValidationError("partition must cover 0..d-1 exactly")

    @classmethod
    def from_interest(cls, interest: int | Sequence[int], dim: int) -> "ParamPartition":
        idx = (int(interest),) if np.isscalar(interest) else tuple(int(i) for i in interest)
        for i in idx:
            if not 0 <= i < dim:
                raise ValidationError(f"interest index {i} outside 0..{dim - 1}")
        return cls(idx, tuple(i for i in range(dim) if i not in idx))

    @property
    def dim(self) -> int:
        return len(self.interest) + len(self.nuisance)

    @property
    def d0(self) -> int:
        return len(self.interest)

    @property
    def order(self) -> np.ndarray:
        """Column order placing interest coordinates first."""
        return np.array(self.interest + self.nuisance, dtype=int)


@dataclass(frozen=True)
class ModelSpec:
    """Evaluators of a parametric log likelihood on the working scale.

    Parameters
    ----------
    dim : int
        Number of parameters ``d``.
    loglik, score, obs_info : callable
        ``theta -> float``, ``theta -> (d,)`` and ``theta -> (d, d)``.
        ``obs_info`` is the negated Hessian of ``loglik``.
    exp_info : callable, optional
        Expected information ``theta -> (d, d)``.
    partition : ParamPartition, optional
        Default interest/nuisance split.
    names : tuple of str, optional
        Working-scale parameter names.
    scales : tuple of {"identity", "log"}, optional
        How each working coordinate maps to the reported (natural) scale.
    domain : tuple of (low, high), optional
        Open interval per working coordinate; ``None`` means the real line.
    evaluate : callable, optional
        ``theta -> (loglik, score, obs_info)`` computed jointly, used when
        cheaper than three separate calls.
    diagnose : callable, optional
        ``theta -> str or None``; a non-empty message marks a fit as failed
        (e.g. suspected separation).
    """

    dim: int
    loglik: Callable[[np.ndarray], float]
    score: Callable[[np.ndarray], np.ndarray]
    obs_info: Callable[[np.ndarray], np.ndarray]
    exp_info: Callable[[np.ndarray], np.ndarray] | None = None
    partition: ParamPartition | None = None
    names: tuple[str, ...] | None = None
    scales: tuple[str, ...] | None = None
    domain: tuple[tuple[float, float], ...] | None = None
    evaluate: Callable | None = None
    diagnose: Callable[[np.ndarray], str | None] | None = None

    def derivs(self, theta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        if self.evaluate is not None:
            ll, g, J = self.evaluate(theta)
            return float(ll), np.asarray(g, float), np.asarray(J, float)
        return float(self.loglik(theta)), np.asarray(self.score(theta), float), np.asarray(self.obs_info(theta), float)

    def with_interest(self, interest: int | str | Sequence[int | str]) -> "ModelSpec":
        """Return a copy whose partition has the given interest coordinates."""
        items = [interest] if isinstance(interest, (int, str, np.integer)) else list(interest)
        idx = [self.index(i) for i in items]
        return replace(self, partition=ParamPartition.from_interest(idx, self.dim))

    def index(self, name: int | str) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        if self.names is None or name not in self.names:
            raise ValidationError(f"unknown parameter {name!r}; known: {self.names}")
        return self.names.index(name)

    def scale_of(self, i: int) -> str:
        return "identity" if self.scales is None else self.scales[i]

    def in_domain(self, theta: np.ndarray) -> bool:
        if self.domain is None:
            return True
        return all(lo < t < hi for t, (lo, hi) in zip(theta, self.domain))


def to_natural(scale: str, value):
    """Map a working-scale value to the reported scale."""
    return np.exp(value) if scale == "log" else value


def from_natural(scale: str, value):
    if scale == "log":
        value = np.asarray(value, float)
        if np.any(value <= 0):
            raise DomainError("log-scale parameter must be positive")
        return np.log(value)
    return value


def natural_derivative(scale: str, value):
    """d(natural)/d(working) at a working-scale value."""
    return np.exp(value) if scale == "log" else np.ones_like(np.asarray(value, float))


@dataclass(frozen=True)
class ModelFit:
    """Result of an unconstrained maximization."""

    theta: np.ndarray
    loglik: float
    obs_info: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    message: str = ""
    model: ModelSpec | None = field(default=None, repr=False, compare=False)

    @property
    def covariance(self) -> np.ndarray:
        return _inverse(self.obs_info, "j")

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def natural_estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """Estimates and delta-method standard errors on the reported scale."""
        est = np.empty_like(self.theta)
        se = np.empty_like(self.theta)
        base_se = self.se
        for i, t in enumerate(self.theta):
            sc = self.model.scale_of(i) if self.model is not None else "identity"
            est[i] = to_natural(sc, t)
            se[i] = base_se[i] * natural_derivative(sc, t)
        return est, se


@dataclass(frozen=True)
class ConstrainedFit:
    """Maximizer of the likelihood with interest coordinates held fixed."""

    psi: np.ndarray
    theta: np.ndarray
    loglik: float
    obs_info: np.ndarray
    partition: ParamPartition
    converged: bool
    iterations: int
    grad_norm: float
    message: str = ""

    @property
    def profile_loglik(self) -> float:
        return self.loglik

    @property
    def lambda_hat(self) -> np.ndarray:
        return self.theta[list(self.partition.nuisance)]

    def block(self, rows: str, cols: str) -> np.ndarray:
        pick = {"psi": list(self.partition.interest), "lambda": list(self.partition.nuisance)}
        return self.obs_info[np.ix_(pick[rows], pick[cols])]

    @property
    def info_blocks(self) -> dict[str, np.ndarray]:
        return {
            "psi_psi": self.block("psi", "psi"),
            "psi_lambda": self.block("psi", "lambda"),
            "lambda_psi": self.block("lambda", "psi"),
            "lambda_lambda": self.block("lambda", "lambda"),
        }


def _inverse(A: np.ndarray, name: str) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(name, "not positive definite") from exc
    Linv = np.linalg.solve(L, np.eye(len(A)))
    return Linv.T @ Linv


def _ascent_step(J: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Newton step, with eigenvalue modification when ``J`` is not positive definite."""
    try:
        L = np.linalg.cholesky(J)
        return np.linalg.solve(L.T, np.linalg.solve(L, g))
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (J + J.T))
        floor = 1e-8 * max(np.max(np.abs(vals)), 1e-300)
        vals = np.maximum(np.abs(vals), floor)
        return vecs @ ((vecs.T @ g) / vals)


def _newton(model: ModelSpec, theta0: np.ndarray, free: np.ndarray, gtol: float, max_iter: int):
    theta = np.array(theta0, dtype=float)
    if not model.in_domain(theta):
        raise DomainError(f"start {theta} outside the parameter domain")
    ll, g, J = model.derivs(theta)
    if not np.isfinite(ll):
        raise DomainError(f"log likelihood not finite at start {theta}")
    message = ""
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gf = g[free]
        if not np.all(np.isfinite(gf)):
            raise DomainError(f"non-finite score at {theta}")
        gnorm = float(np.max(np.abs(gf))) if gf.size else 0.0
        if gnorm <= gtol:
            converged = True
            break
        step = _ascent_step(J[np.ix_(free, free)], gf)
        a = 1.0
        slack = 1e-12 * (1.0 + abs(ll))
        accepted = False
        for _ in range(60):
            cand = theta.copy()
            cand[free] += a * step
            if model.in_domain(cand):
                llc = model.loglik(cand)
                if np.isfinite(llc) and llc >= ll - slack:
                    accepted = True
                    break
            a *= 0.5
        moved = np.max(np.abs(a * step)) > 1e-15 * (1.0 + np.max(np.abs(theta)))
        if not accepted or not moved:
            # round-off floor: accept when the Newton decrement is negligible
            decrement = float(gf @ step)
            converged = decrement <= 1e-14 * (1.0 + abs(ll)) and gnorm <= 1e3 * gtol
            message = "" if converged else "line search failed to improve the log likelihood"
            break
        theta = cand
        ll, g, J = model.derivs(theta)
        if np.max(np.abs(theta)) > _DIVERGENCE_BOUND:
            message = "diverging parameters"
            break
    else:
        message = f"no convergence within {max_iter} iterations"
    if converged and model.diagnose is not None:
        note = model.diagnose(theta)
        if note:
            converged, message = False, note
    gf = g[free]
    gnorm = float(np.max(np.abs(gf))) if gf.size else 0.0
    return theta, ll, J, converged, it, gnorm, message


def maximize_likelihood(
    model: ModelSpec, start: Sequence[float], *, gtol: float = GRADIENT_TOL, max_iter: int = MAX_ITER
) -> ModelFit:
    """Maximize the log likelihood by damped Newton iterations.

    Parameters
    ----------
    model : ModelSpec
    start : array_like
        Starting point on the working scale.
    gtol : float
        Convergence tolerance on the infinity norm of the score.
    max_iter : int

    Returns
    -------
    ModelFit
        ``converged`` is False, with a diagnostic message, when iterations
        run out or the model-specific diagnostic fires.  Non-convergence is
        reported, not raised.

    Raises
    ------
    DomainError
        If the log likelihood is not finite at ``start``.
    """
    start = np.asarray(start, dtype=float)
    if start.shape != (model.dim,):
        raise ValidationError(f"start must have length {model.dim}")
    theta, ll, J, ok, it, gnorm, msg = _newton(model, start, np.arange(model.dim), gtol, max_iter)
    if ok:
        try:
            np.linalg.cholesky(J)
        except np.linalg.LinAlgError:
            ok, msg = False, "observed information not positive definite at the stationary point"
    return ModelFit(theta, ll, J, ok, it, gnorm, msg, model)


def constrained_maximize(
    model: ModelSpec,
    psi: float | Sequence[float],
    start: Sequence[float] | None = None,
    *,
    partition: ParamPartition | None = None,
    gtol: float = GRADIENT_TOL,
    max_iter: int = MAX_ITER,
) -> ConstrainedFit:
    """Maximize over the nuisance coordinates with the interest coordinates fixed at ``psi``.

    ``start`` may be a nuisance vector or a full parameter vector (whose
    interest entries are overwritten).
    """
    part = partition or model.partition
    if part is None:
        raise ValidationError("model has no interest/nuisance partition")
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    if psi.shape != (part.d0,):
        raise ValidationError(f"psi must have length {part.d0}")
    theta0 = np.zeros(model.dim)
    if start is not None:
        start = np.asarray(start, dtype=float)
        if start.shape == (model.dim,):
            theta0 = start.copy()
        elif start.shape == (len(part.nuisance),):
            theta0[list(part.nuisance)] = start
        else:
            raise ValidationError("start has the wrong length")
    theta0[list(part.interest)] = psi
    theta, ll, J, ok, it, gnorm, msg = _newton(model, theta0, np.array(part.nuisance, dtype=int), gtol, max_iter)
    return ConstrainedFit(psi, theta, ll, J, part, ok, it, gnorm, msg)


def profile_information(cfit: ConstrainedFit) -> float | np.ndarray:
    """Profile observed information via the Schur complement of ``j_lambda_lambda``.

    Returns a float for scalar interest and a ``(d0, d0)`` array otherwise.
    """
    b = cfit.info_blocks
    if b["lambda_lambda"].size:
        try:
            L = np.linalg.cholesky(b["lambda_lambda"])
        except np.linalg.LinAlgError as exc:
            raise SingularInformationError("j_lambda_lambda", f"at psi={cfit.psi}") from exc
        jp = b["psi_psi"] - b["psi_lambda"] @ np.linalg.solve(L.T, np.linalg.solve(L, b["lambda_psi"]))
    else:
        jp = b["psi_psi"]
    return float(jp[0, 0]) if jp.shape == (1, 1) else jp


def mle_profile_information(fit: ModelFit, partition: ParamPartition) -> np.ndarray:
    """``j_p(psi_hat)`` as the inverse of the interest corner of ``j(theta_hat)^-1``."""
    cov = fit.covariance
    idx = list(partition.interest)
    return np.linalg.inv(cov[np.ix_(idx, idx)])


@dataclass(frozen=True)
class FirstOrderPivots:
    wald: float | None
    score: float | None
    r: float | None
    w: float


def first_order_pivots(
    fit: ModelFit,
    cfit: ConstrainedFit,
    *,
    score_at: str = "mle",
    model: ModelSpec | None = None,
    tol: float = 1e-7,
) -> FirstOrderPivots:
    """Wald, score, likelihood-root and likelihood-ratio statistics at ``cfit.psi``.

    Parameters
    ----------
    score_at : {"mle", "psi"}
        Where the profile information normalizing the score statistic is
        evaluated.  ``"mle"`` uses ``j_p(psi_hat)``.
    model : ModelSpec, optional
        Needed for the score statistic; defaults to ``fit.model``.
    tol : float
        Relative slack allowed for ``l_p(psi) > l_p(psi_hat)`` before the
        constrained fit is declared inconsistent.
    """
    part = cfit.partition
    w = 2.0 * (fit.loglik - cfit.loglik)
    if w < -tol * (1.0 + abs(fit.loglik)):
        raise NumericalError(
            f"profile log likelihood exceeds its maximum by {-w / 2:.3g} at psi={cfit.psi}; constrained fit is inconsistent"
        )
    w = max(w, 0.0)
    if part.d0 != 1:
        return FirstOrderPivots(None, None, None, w)
    k = part.interest[0]
    diff = fit.theta[k] - cfit.psi[0]
    jp_hat = float(mle_profile_information(fit, part)[0, 0])
    wald = diff * np.sqrt(jp_hat)
    r = float(np.sign(diff) * np.sqrt(w))
    model = model or fit.model
    score = None
    if model is not None:
        g = np.asarray(model.score(cfit.theta), float)[k]
        jp = jp_hat if score_at == "mle" else profile_information(cfit)
        score = float(g / np.sqrt(jp))
    return FirstOrderPivots(float(wald), score, r, w)
