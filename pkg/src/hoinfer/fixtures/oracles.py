"""Independent reference computations used to validate the main code paths."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np
from scipy import stats

from ..exceptions import BudgetExceededError, NumericalError


@dataclass(frozen=True)
class ReferenceSetCounts:
    """Counts from a full sweep of ``{0,1}^n``.

    Attributes
    ----------
    matched : int
        Number of ``y`` with ``X'y = s``.
    t_counts : dict
        ``Z'y`` value -> count among matched ``y``.
    """

    matched: int
    t_counts: dict

    @property
    def support(self) -> list:
        return sorted(self.t_counts)


def enumerate_binary_reference_set(X: np.ndarray, Z: np.ndarray, s, *, max_n: int = 20) -> ReferenceSetCounts:
    """Enumerate every binary response vector and count those with ``X'y = s``.

    Deliberately simple: one pass over ``itertools.product`` with exact
    rational arithmetic on rounded statistics.
    """
    X = np.asarray(X, float).reshape(len(X), -1)
    Z = np.asarray(Z, float).reshape(len(X))
    n = X.shape[0]
    if n > max_n:
        raise BudgetExceededError(f"direct sweep limited to n <= {max_n}")
    target = tuple(round(float(v), 9) for v in np.atleast_1d(s))
    counts: Counter = Counter()
    matched = 0
    for y in product((0, 1), repeat=n):
        ya = np.fromiter(y, float, n)
        if tuple(round(float(v), 9) for v in X.T @ ya) == target:
            matched += 1
            counts[round(float(Z @ ya), 9)] += 1
    return ReferenceSetCounts(matched, dict(counts))


def student_t_oracle(n: int, p: int):
    """Exact distribution of a coefficient pivot ``(beta_hat - beta) / se`` under normal errors.

    Returns a frozen Student-t distribution with ``n - p`` degrees of freedom.
    """
    if n <= p:
        raise ValueError("need n > p")
    return stats.t(df=n - p)


@dataclass(frozen=True)
class FDResult:
    value: np.ndarray
    error: np.ndarray


def _step(x: np.ndarray) -> np.ndarray:
    return np.finfo(float).eps ** (1 / 3) * np.maximum(1.0, np.abs(x))


def fd_gradient(f: Callable, x, h=None) -> np.ndarray:
    """Plain central-difference gradient (or Jacobian for vector ``f``)."""
    x = np.asarray(x, float)
    h = _step(x) if h is None else np.broadcast_to(h, x.shape)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((np.asarray(f(x + e), float) - np.asarray(f(x - e), float)) / (2 * h[i]))
    return np.stack(cols, axis=-1)


def finite_difference_harness(f: Callable, x, *, kind: str = "gradient") -> FDResult:
    """Richardson-extrapolated central differences with an error estimate.

    Parameters
    ----------
    f : callable
        Scalar (``kind="gradient"`` or ``"hessian"``) or vector
        (``kind="jacobian"``) function.
    kind : {"gradient", "jacobian", "hessian"}
        ``"hessian"`` differentiates ``f`` twice.

    Returns
    -------
    FDResult
        ``value`` is the extrapolated estimate; ``error`` the absolute
        change between step ``h`` and ``h/2`` extrapolations.
    """
    x = np.asarray(x, float)

    def checked(v):
        v = np.asarray(f(v), float)
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite evaluation at {v}")
        return v

    if kind in ("gradient", "jacobian"):
        h = _step(x) * 4
        d1 = fd_gradient(checked, x, h)
        d2 = fd_gradient(checked, x, h / 2)
        d4 = fd_gradient(checked, x, h / 4)
        r1 = (4 * d2 - d1) / 3
        r2 = (4 * d4 - d2) / 3
        return FDResult(r2, np.abs(r2 - r1))
    if kind == "hessian":
        grad = lambda v: finite_difference_harness(checked, v, kind="gradient").value
        h = np.finfo(float).eps ** (1 / 4) * np.maximum(1.0, np.abs(x))
        H1 = fd_gradient(grad, x, h)
        H2 = fd_gradient(grad, x, h / 2)
        R = (4 * H2 - H1) / 3
        R = 0.5 * (R + R.T)
        return FDResult(R, np.abs(R - 0.5 * (H2 + H2.T)))
    raise ValueError(f"unknown kind {kind!r}")
