"""Marginal conditional tail probabilities by nested adaptive quadrature.

Works in ``(z1, v)`` with ``v = log z2`` so that the scale direction is
unbounded; the integrand is ``exp(n v - sum g0((x_i' z1 + a_i) e^v))``,
normalized by its maximum to avoid underflow.  Supports one or two
coefficients, i.e. at most three integration dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import warnings

import numpy as np
from scipy import integrate, optimize

from ..exceptions import BudgetExceededError, ValidationError
from .laws import ErrorLaw


@dataclass(frozen=True)
class QuadratureResult:
    probability: float
    log_normalizer: float
    evaluations: int


class _Integrand:
    def __init__(self, a, X, law, budget):
        self.a = np.asarray(a, float)
        self.X = np.asarray(X, float).reshape(len(self.a), -1)
        self.law = law
        self.n, self.p = self.X.shape
        self.count = 0
        self.budget = budget
        self.shift = 0.0
        self.shift = -self.mode_value()

    def log(self, z1, v):
        self.count += 1
        if self.count > self.budget:
            raise BudgetExceededError("quadrature evaluation budget exhausted")
        with np.errstate(over="ignore", invalid="ignore"):
            arg = (self.X @ z1 + self.a) * np.exp(v)
            val = self.n * v - np.sum(self.law.g0(arg)) + self.shift
        return val if np.isfinite(val) else -np.inf

    def __call__(self, z1, v):
        return np.exp(self.log(np.atleast_1d(z1), v))

    def mode_value(self):
        x0 = np.zeros(self.p + 1)
        res = optimize.minimize(lambda w: -self.log(w[:-1], w[-1]), x0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        self.mode = res.x
        return -res.fun


def _tail_2d(f: _Integrand, interest, value, eps):
    # p = 1: integrate v inside, z1 (or v) outside
    m_z, m_v = f.mode[0], f.mode[1]
    opts = dict(epsabs=0.0, epsrel=eps, limit=200)

    def inner_v(z):
        lo = integrate.quad(lambda v: f(z, v), -np.inf, m_v, **opts)[0]
        hi = integrate.quad(lambda v: f(z, v), m_v, np.inf, **opts)[0]
        return lo + hi

    def inner_z(v):
        lo = integrate.quad(lambda z: f(z, v), -np.inf, m_z, **opts)[0]
        hi = integrate.quad(lambda z: f(z, v), m_z, np.inf, **opts)[0]
        return lo + hi

    if interest == "log_sigma":
        g, m = inner_z, m_v
    else:
        g, m = inner_v, m_z
    outer = dict(epsabs=0.0, epsrel=eps * 10, limit=200)
    left = integrate.quad(g, -np.inf, m, **outer)[0]
    right = integrate.quad(g, m, np.inf, **outer)[0]
    total = left + right
    if value <= m:
        part = integrate.quad(g, -np.inf, value, **outer)[0]
    else:
        part = total - integrate.quad(g, value, np.inf, **outer)[0]
    return part / total, np.log(total) - f.shift


def _tail_3d(f: _Integrand, interest, value, eps):
    lim = [(-np.inf, np.inf)] * 3
    opts = {"epsrel": eps, "epsabs": 0.0, "limit": 100}

    def dens(u0, u1, u2):
        return f(np.array([u0, u1]), u2)

    # integration order: the interest coordinate outermost
    if interest == "log_sigma":
        h = dens
    else:
        j = int(interest)
        other = 1 - j
        def h(a, b, c, j=j, other=other):
            z = np.empty(2)
            z[other], z[j] = a, c
            return f(z, b)
    total = integrate.nquad(h, lim, opts=[opts] * 3)[0]
    lim_tail = [(-np.inf, np.inf), (-np.inf, np.inf), (-np.inf, value)]
    part = integrate.nquad(h, lim_tail, opts=[opts] * 3)[0]
    return part / total, np.log(total) - f.shift


def quadrature_oracle(a, X, law: ErrorLaw, interest, value: float, *, eps: float = 1e-9, budget: int = 10**8) -> QuadratureResult:
    """Conditional probability that a pivot lies below ``value``, given ``a``.

    Parameters
    ----------
    interest : int or "log_sigma"
        Coefficient index ``l`` for ``Z1_l = (beta_hat_l - beta_l) / sigma_hat``
        or ``"log_sigma"`` for ``log Z2 = log(sigma_hat / sigma)``.
    value : float
    eps : float
        Relative tolerance passed to the inner integrations.
    budget : int
        Maximum number of integrand evaluations.

    Raises
    ------
    BudgetExceededError
        If the evaluation budget runs out.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return _oracle(a, X, law, interest, value, eps, budget)


def _oracle(a, X, law, interest, value, eps, budget):
    f = _Integrand(a, X, law, budget)
    if f.p > 2:
        raise ValidationError("quadrature oracle supports at most two coefficients")
    if interest != "log_sigma" and not 0 <= int(interest) < f.p:
        raise ValidationError("interest index out of range")
    if f.p == 1:
        prob, lognorm = _tail_2d(f, interest, value, eps)
    else:
        prob, lognorm = _tail_3d(f, interest, value, max(eps, 1e-7))
    return QuadratureResult(float(prob), float(lognorm), f.count)
