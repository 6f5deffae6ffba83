"""Logistic regression as a linear exponential family.

The log likelihood depends on the data only through the sufficient
statistics ``t = Z'y`` (interest) and ``s = X'y`` (nuisance), so models are
built from ``(design, statistics)`` pairs.  This also allows non-integer
``t`` values, which continuity-corrected lattice scans need.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp
from scipy.stats import norm

from .core import ConstrainedFit, ModelFit, ModelSpec, ParamPartition, constrained_maximize, maximize_likelihood
from .corrections import QIngredients, SINGULAR_R, information_ratio, modified_root, midp_significance
from .exceptions import (
    BudgetExceededError,
    NumericalError,
    SingularInformationError,
    UnsupportedVariantError,
    ValidationError,
)
from .profiling import GridSpec, PivotProfile, build_profile, hybrid_bridge

_SEPARATION_ETA = 30.0


@dataclass(frozen=True)
class BinaryDataset:
    """Binary responses with interest covariates ``Z`` and nuisance covariates ``X``.

    ``X`` should contain the intercept column if one is wanted.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, float)
        X = np.asarray(self.X, float).reshape(len(y), -1)
        Z = np.asarray(self.Z, float).reshape(len(y), -1)
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("responses must be 0 or 1")
        if Z.shape[1] < 1:
            raise ValidationError("at least one interest covariate is required")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{i}" for i in range(X.shape[1])))
        if not self.z_names:
            object.__setattr__(self, "z_names", tuple(f"z{i}" for i in range(Z.shape[1])))

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def design(self) -> np.ndarray:
        """``[Z, X]``: interest columns first."""
        return np.column_stack([self.Z, self.X])

    @property
    def t(self) -> np.ndarray:
        return self.Z.T @ self.y

    @property
    def s(self) -> np.ndarray:
        return self.X.T @ self.y

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.z_names) + tuple(self.x_names)

    def check_rank(self) -> None:
        A = self.design
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise ValidationError("design [Z, X] is not of full column rank")


def logistic_model(design: np.ndarray, stats: np.ndarray, d0: int = 1, names: Sequence[str] | None = None) -> ModelSpec:
    """Canonical-parameter logistic model from a design and its sufficient statistics.

    Parameters
    ----------
    design : (n, d) ndarray
        Interest columns first.
    stats : (d,) ndarray
        ``design' y``; need not be integer.
    d0 : int
        Number of leading interest columns.
    """
    A = np.asarray(design, float)
    u = np.asarray(stats, float)
    d = A.shape[1]

    def loglik(theta):
        return float(u @ theta - np.logaddexp(0.0, A @ theta).sum())

    def score(theta):
        return u - A.T @ expit(A @ theta)

    def obs_info(theta):
        p = expit(A @ theta)
        return (A.T * (p * (1 - p))) @ A

    def evaluate(theta):
        eta = A @ theta
        p = expit(eta)
        return float(u @ theta - np.logaddexp(0.0, eta).sum()), u - A.T @ p, (A.T * (p * (1 - p))) @ A

    def diagnose(theta):
        if np.max(np.abs(A @ theta)) > _SEPARATION_ETA:
            return "separation suspected: fitted probabilities numerically 0 or 1"
        return None

    return ModelSpec(
        dim=d, loglik=loglik, score=score, obs_info=obs_info, exp_info=obs_info,
        partition=ParamPartition.from_interest(list(range(d0)), d),
        names=tuple(names) if names is not None else None, evaluate=evaluate, diagnose=diagnose,
    )


def dataset_model(data: BinaryDataset) -> ModelSpec:
    return logistic_model(data.design, np.concatenate([data.t, data.s]), data.Z.shape[1], data.names)


def fit_logistic(data: BinaryDataset, start: Sequence[float] | None = None) -> ModelFit:
    """Maximum likelihood fit in the canonical parametrization ``theta = (psi, lambda)``."""
    model = dataset_model(data)
    return maximize_likelihood(model, np.zeros(model.dim) if start is None else start)


def canonical_ingredients(dim: int) -> QIngredients:
    """Identity local parametrization, valid for any linear exponential family."""
    eye = np.eye(dim)
    return QIngredients("canonical-expfam", phi=lambda th: np.asarray(th, float), phi_dtheta=lambda th: eye)


def q_canonical_expfam(fit: ModelFit, cfit: ConstrainedFit) -> float:
    """``(psi_hat - psi) sqrt(|j(theta_hat)| / |j_lambda_lambda(theta_psi)|)``."""
    k = cfit.partition.interest[0]
    return float((fit.theta[k] - cfit.psi[0]) * information_ratio(fit, cfit))


def log_adjustment_expfam(fit: ModelFit, cfit: ConstrainedFit) -> float:
    """``log M(psi) = 0.5 log |j_lambda_lambda(theta_psi)|`` up to a constant.

    In the canonical parametrization the sample-space derivative
    ``l_{lambda;lambda_hat}`` is ``j_lambda_lambda(theta_hat)`` and does not
    vary with ``psi``, so only the numerator of the general adjustment remains.
    """
    jll = cfit.block("lambda", "lambda")
    if jll.size == 0:
        return 0.0
    sign, ld = np.linalg.slogdet(jll)
    if sign <= 0:
        raise SingularInformationError("j_lambda_lambda", f"at psi={cfit.psi}")
    return 0.5 * float(ld)


def profile_logistic(data: BinaryDataset, interest: int | str = 0, grid: GridSpec | None = None, fit: ModelFit | None = None) -> PivotProfile:
    """Pivot profile with ``q``, ``r*`` and the adjusted profile likelihood.

    ``interest`` indexes the ``Z`` columns (or names one).
    """
    model = dataset_model(data)
    fit = fit or maximize_likelihood(model, np.zeros(model.dim))
    return build_profile(model, fit, interest, q_func=q_canonical_expfam, log_adjust=log_adjustment_expfam, adjust_variant="expfam-canonical", grid=grid)


# exact conditional distribution ------------------------------------------------


def _integer_scale(M: np.ndarray, max_den: int = 1000) -> int:
    """Smallest common multiplier making every entry an integer."""
    den = 1
    for v in np.unique(M):
        f = Fraction(float(v)).limit_denominator(max_den)
        if abs(float(f) - v) > 1e-9 * max(1.0, abs(v)):
            raise UnsupportedVariantError("conditioning statistics are not on a lattice")
        den = lcm(den, f.denominator)
    return den


def _sweep_counts(Xi: np.ndarray, Zi: np.ndarray, s_target: np.ndarray | None, chunk: int = 1 << 16) -> dict[int, int]:
    """Brute-force 2^n enumeration of ``Z'y`` counts among ``y`` with ``X'y = s_target``."""
    n = Xi.shape[0]
    counts: dict[int, int] = {}
    bits = np.arange(n, dtype=np.int64)
    for begin in range(0, 1 << n, chunk):
        idx = np.arange(begin, min(begin + chunk, 1 << n), dtype=np.int64)
        Y = (idx[:, None] >> bits) & 1
        keep = np.all(Y @ Xi == s_target, axis=1) if s_target is not None else np.ones(len(idx), bool)
        tv, c = np.unique(Y[keep] @ Zi, return_counts=True)
        for a, b in zip(tv.tolist(), c.tolist()):
            counts[a] = counts.get(a, 0) + int(b)
    return counts


def _generating_function_counts(Xi: np.ndarray, Zi: np.ndarray, s_target: np.ndarray) -> dict[int, int]:
    """Exact counts by polynomial multiplication over observations."""
    n = Xi.shape[0]
    # states that cannot reach s_target are kept; n is small enough that pruning is unnecessary
    states: dict[tuple, int] = {(0,) * (Xi.shape[1] + 1): 1}
    for i in range(n):
        row = (int(Zi[i]),) + tuple(int(v) for v in Xi[i])
        new = dict(states)
        for key, c in states.items():
            k2 = tuple(a + b for a, b in zip(key, row))
            new[k2] = new.get(k2, 0) + c
        states = new
        if len(states) > 5_000_000:
            raise BudgetExceededError("generating-function state space exceeded 5e6 entries")
    target = tuple(int(v) for v in s_target)
    return {key[0]: c for key, c in states.items() if key[1:] == target}


@dataclass(frozen=True)
class ConditionalLattice:
    """Exact conditional distribution of ``T = Z'y`` given ``X'y = s``."""

    support: np.ndarray
    counts: np.ndarray
    psi: float
    pmf: np.ndarray

    @property
    def reference_set_size(self) -> int:
        return int(sum(int(c) for c in self.counts))

    def at(self, psi: float) -> "ConditionalLattice":
        return ConditionalLattice(self.support, self.counts, psi, _pmf(self.support, self.counts, psi))

    def cdf(self, t: float) -> float:
        return float(self.pmf[self.support <= t + 1e-9].sum())

    def cdf_left(self, t: float) -> float:
        return float(self.pmf[self.support < t - 1e-9].sum())

    def midp(self, t: float) -> float:
        return midp_significance(self.support, self.pmf, t)


def _pmf(support, counts, psi):
    logw = np.log(np.asarray(counts, float)) + psi * np.asarray(support, float)
    return np.exp(logw - logsumexp(logw))


def conditional_counts(data: BinaryDataset, *, method: str = "auto", condition_on: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Support and exact integer counts of ``T`` over the reference set.

    Parameters
    ----------
    method : {"auto", "sweep", "gf"}
        Direct 2^n sweep (n <= 30) or generating-function multiplication.
    condition_on : sequence of int, optional
        Subset of nuisance statistics to condition on (default: all).
    """
    if data.Z.shape[1] != 1:
        raise ValidationError("exact enumeration supports a single interest covariate")
    cols = list(range(data.X.shape[1])) if condition_on is None else list(condition_on)
    X = data.X[:, cols]
    mx = _integer_scale(X) if X.size else 1
    mz = _integer_scale(data.Z)
    Xi = np.rint(X * mx).astype(np.int64)
    Zi = np.rint(data.Z[:, 0] * mz).astype(np.int64)
    s_target = Xi.T @ data.y.astype(np.int64)
    if method == "auto":
        method = "sweep" if data.n <= 20 else "gf"
    if method == "sweep":
        if data.n > 30:
            raise BudgetExceededError("direct enumeration limited to n <= 30")
        counts = _sweep_counts(Xi, Zi, s_target)
    elif method == "gf":
        counts = _generating_function_counts(Xi, Zi, s_target)
    else:
        raise ValidationError(f"unknown enumeration method {method!r}")
    keys = sorted(counts)
    return np.array(keys, float) / mz, np.array([counts[k] for k in keys], dtype=object)


def exact_conditional_distribution(data: BinaryDataset, psi: float = 0.0, *, method: str = "auto") -> ConditionalLattice:
    """Exact conditional pmf of ``T`` given ``S = s`` at interest value ``psi``."""
    support, counts = conditional_counts(data, method=method)
    return ConditionalLattice(support, counts, float(psi), _pmf(support, counts, psi))


# lattice scans ---------------------------------------------------------------


def _roots_at_t(design, s, t, psi0, d0=1):
    model = logistic_model(design, np.concatenate([[t], s]), d0)
    fit = maximize_likelihood(model, np.zeros(model.dim))
    if not fit.converged:
        return np.nan, np.nan
    cf = constrained_maximize(model, psi0, fit.theta)
    if not cf.converged:
        return np.nan, np.nan
    w = max(2 * (fit.loglik - cf.loglik), 0.0)
    r = np.sign(fit.theta[0] - psi0) * np.sqrt(w)
    return float(r), q_canonical_expfam(fit, cf)


def rstar_in_t(data: BinaryDataset, psi0: float, t_values: Sequence[float], *, step: float = 0.125, singular: float = SINGULAR_R):
    """``r(t)`` and bridged ``r*(t)`` as functions of a continuous statistic ``t``.

    ``t`` enters the likelihood only through the sufficient statistic, so the
    curves are evaluated on a fine ``t`` grid; values with ``|r|`` below
    ``singular`` are bridged exactly as on a parameter grid.

    Returns
    -------
    r, rstar : ndarray
        Values at ``t_values``.
    """
    t_values = np.asarray(t_values, float)
    design = data.design
    s = data.s
    support, _ = conditional_counts(data)
    lo = max(support.min(), t_values.min() - 3.0)
    hi = min(support.max(), t_values.max() + 3.0)
    grid = np.union1d(np.arange(np.floor(lo / step) * step, hi + step / 2, step), t_values)
    grid = grid[(grid >= support.min()) & (grid <= support.max())]
    rs = np.array([_roots_at_t(design, s, t, psi0) for t in grid])
    r, q = rs[:, 0], rs[:, 1]
    rstar = modified_root(r, q)
    zone = np.abs(r) < singular
    rstar = np.where(zone, np.nan, rstar)
    if zone.any():
        # r increases with t; the bridge expects a decreasing profile, so flip t
        filled, _ = hybrid_bridge(-grid[::-1], r[::-1], rstar[::-1], zone[::-1])
        rstar = filled[::-1]
    pick = np.searchsorted(grid, t_values)
    return r[pick], rstar[pick]


@dataclass(frozen=True)
class LatticeRow:
    t: float
    cdf: float
    cdf_left: float
    midp: float
    phi_r: float
    phi_rstar: float
    phi_rstar_half: float


def lattice_scan(data: BinaryDataset, psi: float, t_values: Sequence[float] | None = None) -> list[LatticeRow]:
    """Compare the exact conditional CDF of ``T`` with normal approximations.

    For each support value ``t`` (or the requested subset) the row gives
    ``pr(T <= t)``, ``pr(T < t)``, the mid-P value, ``Phi(r(t))``,
    ``Phi(r*(t))`` and the continuity-corrected ``Phi(r*(t + 1/2))``.
    """
    lattice = exact_conditional_distribution(data, psi)
    ts = lattice.support if t_values is None else np.asarray(t_values, float)
    ts = np.array([t for t in ts if np.any(np.isclose(lattice.support, t))])
    half = ts + 0.5
    inside = half <= lattice.support.max()
    allt = np.union1d(ts, half[inside])
    r, rstar = rstar_in_t(data, psi, allt)
    lookup = {round(float(t), 9): (a, b) for t, a, b in zip(allt, r, rstar)}
    rows = []
    for t in ts:
        rt, rst = lookup[round(float(t), 9)]
        half_val = lookup.get(round(float(t + 0.5), 9), (np.nan, np.nan))[1]
        rows.append(LatticeRow(
            float(t), lattice.cdf(t), lattice.cdf_left(t), lattice.midp(t),
            float(norm.cdf(rt)), float(norm.cdf(rst)), float(norm.cdf(half_val)),
        ))
    return rows


# efficiency of binary relative to continuous responses ------------------------------


@dataclass(frozen=True)
class EfficiencyResult:
    v_cont: np.ndarray
    v_bin: np.ndarray
    ratio: np.ndarray
    equivalent_n: np.ndarray
    delta_cont: np.ndarray


def efficiency_ratio(design: np.ndarray, coef: np.ndarray, n_binary: int | None = None) -> EfficiencyResult:
    """Asymptotic variance ratio of continuous (logistic-error) to binary responses.

    ``v_cont`` is the diagonal of ``3 (X'X)^-1``, the variance from observing the
    latent logistic variable, and ``v_bin`` the diagonal of ``(X'WX)^-1`` with
    ``W = diag(pi (1 - pi))``, ``pi`` the fitted probabilities.

    Parameters
    ----------
    design : (n, p) ndarray
    coef : (p,) ndarray
    n_binary : int, optional
        Binary sample size for the equivalent-n column (defaults to ``n``).
    """
    A = np.asarray(design, float)
    coef = np.asarray(coef, float)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise ValidationError("design is rank deficient")
    pi = expit(A @ coef)
    W = pi * (1 - pi)
    try:
        v_bin = np.diag(np.linalg.inv((A.T * W) @ A))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("X'WX is singular (degenerate design)") from exc
    v_cont = np.diag(3.0 * np.linalg.inv(A.T @ A))
    ratio = v_cont / v_bin
    n = A.shape[0] if n_binary is None else n_binary
    return EfficiencyResult(v_cont, v_bin, ratio, ratio * n, coef / np.sqrt(v_cont))


def efficiency_curve(z: np.ndarray, lam: float, psi: float) -> EfficiencyResult:
    """Efficiency for the straight-line design ``[1, z]`` at ``(lambda, psi)``."""
    z = np.asarray(z, float)
    return efficiency_ratio(np.column_stack([np.ones_like(z), z]), np.array([lam, psi]))
