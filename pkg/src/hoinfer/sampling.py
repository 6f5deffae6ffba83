"""Conditional Monte Carlo for regression-scale models.

Given the ancillary configuration ``a``, the estimates ``(beta_hat, log sigma_hat)``
have a density known up to a constant.  An independence Metropolis-Hastings
sampler with a multivariate Student t candidate draws from it; each draw
defines a reconstructed sample ``y = X beta_hat + sigma_hat a`` with the same
ancillary, from which pivots, likelihood roots and modified roots follow.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import ModelSpec, constrained_maximize, maximize_likelihood
from .corrections import lugannani_rice, modified_root
from .exceptions import (
    NumericalError,
    SampleSizeError,
    SamplerTuningError,
    StudyIntegrityError,
    ValidationError,
)
from .regscale.laws import ErrorLaw
from .regscale.model import q_exact_ancillary, rsm_model

NOMINAL_LEVELS = (0.005, 0.01, 0.025, 0.05, 0.10, 0.25)
MIN_DRAWS = 1000
N_BATCHES = 20


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used throughout the sampler."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SamplerConfig:
    """Settings of the independence sampler.

    Attributes
    ----------
    iterations, burn_in, thin : int
    df : float
        Degrees of freedom of the Student t candidate.
    scale : float or None
        Multiplier of the inverse curvature at the target mode; ``None``
        selects it from a pilot run.
    tuning : {"band", "max"}
        Pilot rule: bring the acceptance rate into ``band`` by bisection on the
        scale, or maximize it.
    band : tuple of float
    pilot_iterations : int
    beta0, sigma0 : array_like, float or None
        Parameter values at which the conditional density is sampled; default
        the observed estimates.
    seed : int
    """

    iterations: int = 100_000
    burn_in: int = 5_000
    thin: int = 50
    df: float = 5.0
    scale: float | None = None
    tuning: str = "band"
    band: tuple[float, float] = (0.25, 0.30)
    pilot_iterations: int = 2_000
    beta0: tuple[float, ...] | None = None
    sigma0: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValidationError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValidationError("thin must be at least 1")
        if self.df < 1:
            raise ValidationError("candidate degrees of freedom must be at least 1")
        if self.scale is not None and not self.scale > 0:
            raise ValidationError("candidate scale must be positive")
        if self.tuning not in ("band", "max"):
            raise ValidationError("tuning must be 'band' or 'max'")
        if not 0 < self.band[0] < self.band[1] < 1:
            raise ValidationError("acceptance band must satisfy 0 < low < high < 1")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ValidationError("sigma0 must be positive")


@dataclass
class ConditionalTarget:
    """Log density of ``(beta_hat, log sigma_hat)`` given ``a`` at ``(beta0, sigma0)``."""

    X: np.ndarray
    a: np.ndarray
    law: ErrorLaw
    beta0: np.ndarray
    sigma0: float

    @property
    def dim(self) -> int:
        return self.X.shape[1] + 1

    def log_density(self, draws: np.ndarray) -> np.ndarray:
        draws = np.atleast_2d(draws)
        p = self.X.shape[1]
        beta, tau = draws[:, :p], draws[:, p]
        n = len(self.a)
        with np.errstate(over="ignore", invalid="ignore"):
            e = ((beta - self.beta0) @ self.X.T + np.exp(tau)[:, None] * self.a) / self.sigma0
            val = (n - p) * tau - np.sum(self.law.g0(e), axis=1)
        return np.where(np.isfinite(val), val, -np.inf)

    def spec(self) -> ModelSpec:
        X, a, law, s0 = self.X, self.a, self.law, self.sigma0
        n, p = X.shape

        def parts(th):
            et = np.exp(th[p])
            e = (X @ (th[:p] - self.beta0) + et * a) / s0
            return e, et

        def loglik(th):
            return float(self.log_density(th)[0])

        def evaluate(th):
            e, et = parts(th)
            d1, d2 = law.g0_d1(e), law.g0_d2(e)
            de = np.column_stack([X / s0, et * a / s0])
            g = -de.T @ d1
            g[p] += n - p
            H = -(de * d2[:, None]).T @ de
            H[p, p] -= np.sum(d1 * et * a / s0)
            return loglik(th), g, -H

        return ModelSpec(
            dim=p + 1, loglik=loglik, score=lambda t: evaluate(t)[1], obs_info=lambda t: evaluate(t)[2], evaluate=evaluate
        )

    def mode(self) -> tuple[np.ndarray, np.ndarray]:
        """Mode and inverse negative Hessian there."""
        start = np.append(self.beta0, np.log(self.sigma0))
        fit = maximize_likelihood(self.spec(), start)
        if not fit.converged:
            raise SamplerTuningError(f"could not locate the target mode: {fit.message}")
        return fit.theta, fit.covariance


@dataclass
class ChainOutput:
    """Retained draws of an independence sampler.

    Attributes
    ----------
    draws : (N, p + 1) ndarray
        ``(beta_hat, log sigma_hat)`` per retained iteration.
    acceptance_rate : float
        Over all post-pilot iterations.
    """

    draws: np.ndarray
    acceptance_rate: float
    scale: float
    pilot_acceptance: float
    config: SamplerConfig
    target: ConditionalTarget
    names: tuple[str, ...]
    flags: list[str] = field(default_factory=list)

    @property
    def beta(self) -> np.ndarray:
        return self.draws[:, :-1]

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.draws[:, -1])

    def z1(self) -> np.ndarray:
        """Coefficient pivots ``(beta_hat - beta0) / sigma_hat``."""
        return (self.beta - self.target.beta0) / self.sigma[:, None]

    def log_z2(self) -> np.ndarray:
        """``log(sigma_hat / sigma0)``."""
        return self.draws[:, -1] - np.log(self.target.sigma0)

    def pivot(self, which: int | str) -> np.ndarray:
        if which in ("log_sigma", "log_z2", "sigma"):
            return self.log_z2()
        k = int(which)
        if not 0 <= k < self.beta.shape[1]:
            raise ValidationError(f"coefficient index {k} out of range")
        return self.z1()[:, k]

    def reconstruct(self, i: int) -> np.ndarray:
        """Sample ``y = X beta_hat + sigma_hat a`` for retained draw ``i``."""
        return self.target.X @ self.beta[i] + self.sigma[i] * self.target.a

    def to_tsv(self) -> str:
        out = io.StringIO()
        out.write("\t".join(self.names) + "\n")
        for row in self.draws:
            out.write("\t".join(repr(float(v)) for v in row) + "\n")
        return out.getvalue()


def independence_mh(
    log_target: Callable[[np.ndarray], np.ndarray],
    candidate,
    iterations: int,
    rng: np.random.Generator,
    *,
    start: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Independence Metropolis-Hastings with all ratios in log space.

    Parameters
    ----------
    log_target : callable
        Vectorized log density (up to a constant).
    candidate : frozen scipy multivariate distribution
        Provides ``rvs`` and ``logpdf``.
    iterations : int
    rng : numpy Generator
    start : ndarray, optional
        Initial state; defaults to the first candidate draw.

    Returns
    -------
    chain : (iterations, d) ndarray
    acceptance : float
    """
    props = np.atleast_2d(candidate.rvs(size=iterations, random_state=rng))
    if props.shape[0] != iterations:
        props = props.reshape(iterations, -1)
    log_u = np.log(rng.uniform(size=iterations))
    weight = log_target(props) - candidate.logpdf(props)
    if start is None:
        cur, cur_w = props[0], weight[0]
    else:
        cur = np.asarray(start, float)
        cur_w = float(log_target(cur[None, :])[0] - candidate.logpdf(cur))
    chain = np.empty_like(props)
    accepted = 0
    for t in range(iterations):
        if log_u[t] < weight[t] - cur_w:
            cur, cur_w = props[t], weight[t]
            accepted += 1
        chain[t] = cur
    return chain, accepted / iterations


def _candidate(centre, cov, scale, df):
    return stats.multivariate_t(loc=centre, shape=scale * cov, df=df)


def _pilot(target, centre, cov, config) -> tuple[float, float, list[str]]:
    """Choose the candidate scale from pilot runs with common random numbers."""

    def acc(c):
        rng = make_rng(config.seed + 7919)
        return independence_mh(target.log_density, _candidate(centre, cov, c, config.df), config.pilot_iterations, rng, start=centre)[1]

    grid = np.exp(np.linspace(np.log(0.25), np.log(16.0), 13))
    rates = np.array([acc(c) for c in grid])
    k = int(np.argmax(rates))
    best_c, best = float(grid[k]), float(rates[k])
    if best < 0.05:
        raise SamplerTuningError(f"pilot acceptance {best:.3f} below 5%; rescale the candidate or reparametrize")
    if config.tuning == "max":
        return best_c, best, []
    lo_b, hi_b = config.band
    if best < lo_b:
        return best_c, best, [f"acceptance-band-unreachable (max {best:.3f})"]
    if best <= hi_b:
        return best_c, best, []
    # inflate the scale until the rate falls into the band
    lo, hi = np.log(best_c), np.log(best_c)
    while acc(np.exp(hi)) > hi_b:
        lo, hi = hi, hi + np.log(2.0)
        if hi > np.log(best_c) + 20:
            return best_c, best, ["acceptance-band-unreachable"]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        a = acc(np.exp(mid))
        if lo_b <= a <= hi_b:
            return float(np.exp(mid)), a, []
        if a > hi_b:
            lo = mid
        else:
            hi = mid
    c = float(np.exp(hi))
    return c, acc(c), ["acceptance-band-missed"]


def run_conditional_sampler(
    X, a, law: ErrorLaw, config: SamplerConfig, *, beta_hat=None, sigma_hat=None, names: Sequence[str] | None = None
) -> ChainOutput:
    """Sample ``(beta_hat, log sigma_hat)`` from their density given the ancillary ``a``.

    Parameters
    ----------
    X : (n, p) array_like
    a : (n,) array_like
        Ancillary configuration of the observed sample.
    law : ErrorLaw
    config : SamplerConfig
    beta_hat, sigma_hat : optional
        Observed estimates, used as defaults for ``config.beta0, sigma0``.

    Raises
    ------
    SamplerTuningError
        If the pilot acceptance rate is below 5%.
    """
    X = np.asarray(X, float)
    a = np.asarray(a, float)
    if X.ndim != 2 or X.shape[0] != len(a):
        raise ValidationError("X must be (n, p) with n = len(a)")
    p = X.shape[1]
    beta0 = np.asarray(config.beta0 if config.beta0 is not None else (beta_hat if beta_hat is not None else np.zeros(p)), float)
    if beta0.shape != (p,):
        raise ValidationError(f"beta0 must have length {p}")
    sigma0 = float(config.sigma0 if config.sigma0 is not None else (sigma_hat if sigma_hat is not None else 1.0))
    target = ConditionalTarget(X, a, law, beta0, sigma0)
    centre, cov = target.mode()
    flags: list[str] = []
    if config.scale is None:
        scale, pilot_acc, notes = _pilot(target, centre, cov, config)
        flags += notes
    else:
        scale, pilot_acc = config.scale, float("nan")
    rng = make_rng(config.seed)
    chain, rate = independence_mh(target.log_density, _candidate(centre, cov, scale, config.df), config.iterations, rng, start=centre)
    kept = chain[config.burn_in :: config.thin]
    if rate < 0.05:
        raise SamplerTuningError(f"acceptance rate {rate:.3f} below 5%; rescale the candidate")
    names = tuple(names) if names is not None else tuple(f"beta{j}" for j in range(p)) + ("log_sigma",)
    if len(names) != p + 1:
        raise ValidationError(f"names must list {p} coefficients and the log scale")
    return ChainOutput(kept, rate, scale, pilot_acc, config, target, names, flags)


# ---- post-processing -----------------------------------------------------------------


def batch_means_se(indicator: np.ndarray, batches: int = N_BATCHES) -> float:
    """Monte Carlo standard error of a chain average by batch means."""
    x = np.asarray(indicator, float)
    m = len(x) // batches
    if m < 1:
        raise SampleSizeError("too few draws for batch means")
    means = x[: m * batches].reshape(batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(batches))


@dataclass
class EmpiricalPivot:
    """Empirical conditional distribution of one pivot."""

    name: str
    values: np.ndarray

    def cdf(self, x: float) -> tuple[float, float]:
        """Empirical ``pr(Z <= x)`` and its batch-means standard error."""
        ind = self.values <= x
        return float(ind.mean()), batch_means_se(ind)

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))

    def summary(self) -> dict[str, float]:
        v = self.values
        return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)), "median": float(np.median(v)),
                "skewness": float(stats.skew(v))}


def empirical_pivot_cdf(chain: ChainOutput, which: int | str) -> EmpiricalPivot:
    """Empirical distribution of a coefficient pivot ``Z1_l`` or of ``log Z2``.

    Raises
    ------
    SampleSizeError
        With fewer than 1000 retained draws.
    """
    v = chain.pivot(which)
    if len(v) < MIN_DRAWS:
        raise SampleSizeError(f"{len(v)} retained draws; at least {MIN_DRAWS} are needed")
    name = "log_z2" if which in ("log_sigma", "log_z2", "sigma") else f"z1[{int(which)}]"
    return EmpiricalPivot(name, v)


def _interest_index(which, p) -> int:
    return p if which in ("log_sigma", "log_z2", "sigma") else int(which)


@dataclass
class PivotDraws:
    """Per-draw significance values ``Phi(r)``, ``Phi(r*)`` and ``Phi*(r)`` at the sampling value."""

    parameter: str
    r: np.ndarray
    rstar: np.ndarray
    lr: np.ndarray
    failures: int


def pivot_draws(chain: ChainOutput, which: int | str) -> PivotDraws:
    """Refit every reconstructed sample and evaluate the pivots at the sampling value.

    Raises
    ------
    StudyIntegrityError
        If more than 1% of the refits fail.
    """
    tgt = chain.target
    X, a, law = tgt.X, tgt.a, tgt.law
    law.require_smooth()
    p = X.shape[1]
    k = _interest_index(which, p)
    psi0 = np.log(tgt.sigma0) if k == p else tgt.beta0[k]
    N = len(chain.draws)
    r = np.full(N, np.nan)
    q = np.full(N, np.nan)
    lr = np.full(N, np.nan)
    failures = 0
    for i in range(N):
        y = chain.reconstruct(i)
        model = rsm_model(y, X, law).with_interest(k)
        theta = chain.draws[i]
        fit = maximize_likelihood(model, theta)
        if not fit.converged or np.max(np.abs(fit.theta - theta)) > 1e-6 * (1 + np.max(np.abs(theta))):
            failures += 1
            continue
        try:
            cf = constrained_maximize(model, psi0, theta)
            if not cf.converged:
                raise NumericalError(cf.message)
            w = max(2 * (fit.loglik - cf.loglik), 0.0)
            r[i] = np.sign(theta[k] - psi0) * np.sqrt(w)
            q[i] = q_exact_ancillary(fit, cf, X, law, a)
        except NumericalError:
            failures += 1
            continue
        try:
            lr[i] = lugannani_rice(r[i], q[i], singular_threshold=0.0)
        except NumericalError:
            pass
    if failures > 0.01 * N:
        raise StudyIntegrityError(f"{failures} of {N} refits failed")
    name = "log_sigma" if k == p else f"beta{k}"
    return PivotDraws(name, stats.norm.cdf(r), stats.norm.cdf(modified_root(r, q)), lr, failures)


@dataclass
class AccuracyReport:
    """Empirical noncoverage (percent) of upper and lower one-sided limits.

    ``rows[method]`` maps each nominal level to ``(upper, lower)`` noncoverage
    in percent.  ``breakdown`` lists methods omitted because their tail area
    left ``[0, 1]`` too often.
    """

    parameter: str
    levels: tuple[float, ...]
    rows: dict[str, dict[float, tuple[float, float]]]
    lr_above_one: float
    lr_below_zero: float
    breakdown: list[str]
    draws: int
    failures: int

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"parameter {self.parameter}  draws {self.draws}  refit failures {self.failures}\n")
        out.write("method\t" + "\t".join(f"{100 * l:g}% up\t{100 * l:g}% low" for l in self.levels) + "\n")
        for m, row in self.rows.items():
            out.write(m + "\t" + "\t".join(f"{row[l][0]:.2f}\t{row[l][1]:.2f}" for l in self.levels) + "\n")
        for m in self.breakdown:
            out.write(f"{m}: omitted, tail area outside [0, 1] in {100 * self.lr_above_one:.1f}% (>1) and {100 * self.lr_below_zero:.1f}% (<0) of draws\n")
        return out.getvalue()


def conditional_accuracy_study(
    chain: ChainOutput, which: int | str, *, levels: Sequence[float] = NOMINAL_LEVELS, breakdown_fraction: float = 0.05,
    draws: PivotDraws | None = None,
) -> AccuracyReport:
    """Conditional noncoverage of limits based on ``Phi(r)``, ``Phi(r*)`` and ``Phi*(r)``.

    The upper limit at level ``alpha`` misses the sampling value when the
    significance at that value is below ``alpha``; the lower limit misses it
    when the significance exceeds ``1 - alpha``.
    """
    d = draws or pivot_draws(chain, which)
    ok = np.isfinite(d.r)
    n_ok = int(ok.sum())
    lr = d.lr[ok]
    above = float(np.mean(lr > 1))
    below = float(np.mean(lr < 0))
    breakdown = ["lugannani_rice"] if above + below > breakdown_fraction else []
    rows: dict[str, dict[float, tuple[float, float]]] = {}
    for m, vals in (("r", d.r[ok]), ("rstar", d.rstar[ok]), ("lugannani_rice", lr)):
        if m in breakdown:
            continue
        rows[m] = {float(l): (100 * float(np.mean(vals < l)), 100 * float(np.mean(vals > 1 - l))) for l in levels}
    return AccuracyReport(d.parameter, tuple(float(l) for l in levels), rows, above, below, breakdown, n_ok, d.failures)


@dataclass
class QQData:
    theoretical: np.ndarray
    r: np.ndarray
    rstar: np.ndarray

    @property
    def sup_distance(self) -> dict[str, float]:
        return {k: float(np.max(np.abs(getattr(self, k) - self.theoretical))) for k in ("r", "rstar")}


def qq_report(draws: PivotDraws) -> QQData:
    """Normal quantile pairs for the per-draw ``r`` and ``r*`` values.

    Under the conditional model ``Phi(r)`` and ``Phi(r*)`` at the sampling value
    are uniform, so ``r`` and ``r*`` are compared with standard normal quantiles.
    """
    ok = np.isfinite(draws.r) & np.isfinite(draws.rstar)
    r = np.sort(stats.norm.ppf(draws.r[ok]))
    rs = np.sort(stats.norm.ppf(draws.rstar[ok]))
    n = len(r)
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return QQData(theo, r, rs)


@dataclass
class ConsistencyRow:
    q: float
    quantile: float
    cdf_se: float
    phi_r: float
    phi_rstar: float


def pivot_consistency(chain: ChainOutput, y_obs, which: int | str, qs: Sequence[float] = (0.01, 0.05, 0.95, 0.99)) -> list[ConsistencyRow]:
    """Compare empirical pivot quantiles with ``Phi(r)`` and ``Phi(r*)`` from the observed sample.

    For the ``q`` quantile ``z_q`` of the pivot, the parameter value
    ``psi_q`` with pivot value ``z_q`` on the observed data is computed and
    ``Phi(r*(psi_q))`` should be close to ``q``.
    """
    emp = empirical_pivot_cdf(chain, which)
    tgt = chain.target
    X, law = tgt.X, tgt.law
    p = X.shape[1]
    k = _interest_index(which, p)
    model = rsm_model(np.asarray(y_obs, float), X, law).with_interest(k)
    beta = np.linalg.lstsq(X, y_obs, rcond=None)[0]
    fit = maximize_likelihood(model, np.append(beta, np.log(np.std(y_obs - X @ beta))))
    if not fit.converged:
        raise StudyIntegrityError(f"observed sample could not be fitted: {fit.message}")
    a_obs = (np.asarray(y_obs) - X @ fit.theta[:p]) / np.exp(fit.theta[p])
    rows = []
    for q in qs:
        zq = emp.quantile(q)
        _, se = emp.cdf(zq)
        if k == p:
            # log Z2 = log sigma_hat - log sigma
            psi = fit.theta[p] - zq
        else:
            psi = fit.theta[k] - zq * np.exp(fit.theta[p])
        # the pivot is decreasing in psi, so pr(Z <= z_q) is the upper significance at psi_q
        cf = constrained_maximize(model, psi, fit.theta)
        w = max(2 * (fit.loglik - cf.loglik), 0.0)
        r = np.sign(fit.theta[k] - psi) * np.sqrt(w)
        qv = q_exact_ancillary(fit, cf, X, law, a_obs)
        rows.append(ConsistencyRow(float(q), zq, se, float(stats.norm.cdf(r)), float(stats.norm.cdf(modified_root(r, qv)))))
    return rows
