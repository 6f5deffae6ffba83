"""Estimator-style wrappers around the likelihood machinery.

Each estimator follows the scikit-learn conventions: hyperparameters are
set in ``__init__``, :meth:`fit` learns attributes with a trailing
underscore and returns ``self``.  Inference is available through
:meth:`profile`, :meth:`conf_int` and :meth:`pvalue`, which accept a
parameter name and a pivot family.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .exceptions import ValidationError
from .profiling import GridSpec, PivotProfile, standard_intervals, with_grid_retry


class _ProfileInference:
    """Interval and test methods shared by the estimators.

    Subclasses implement ``_build_profile(name, grid)`` and ``_default_grid``.
    """

    level: float
    grid: GridSpec | None

    def _grid(self) -> GridSpec:
        return self.grid if self.grid is not None else self._default_grid()

    def _default_grid(self) -> GridSpec:
        return GridSpec()

    def profile(self, name: str | None = None) -> PivotProfile:
        """Pivot profile of one parameter."""
        check_is_fitted(self, "fit_")
        return self._build_profile(self._name(name), self._grid())

    def conf_int(self, name: str | None = None, pivot: str = "rstar", level: float | None = None) -> tuple[float, float]:
        """Equal-tailed confidence interval on the reported scale."""
        check_is_fitted(self, "fit_")
        lv = self.level if level is None else level
        nm = self._name(name)
        _, out = with_grid_retry(lambda g: self._build_profile(nm, g),
                                 lambda p: standard_intervals(p, [pivot], lv)[pivot], self._grid())
        return out

    def pvalue(self, psi0: float, name: str | None = None, pivot: str = "rstar") -> dict[str, float]:
        """One- and two-sided P-values for ``name = psi0``."""
        check_is_fitted(self, "fit_")
        nm = self._name(name)

        def task(prof):
            if pivot == "wald":
                z = (float(prof.natural(prof.psi_hat)) - psi0) / prof.se_natural
            elif pivot == "wald_a":
                if prof.adjusted is None:
                    raise ValidationError("no adjusted profile available")
                z = (prof.adjusted.psi_hat_a - psi0) / prof.adjusted.se_a
            else:
                return prof.curve(pivot).pvalues(psi0)
            lower = float(norm.cdf(z))
            return {"z": float(z), "lower": lower, "upper": float(norm.sf(z)),
                    "two_sided": float(min(1.0, 2 * min(lower, 1 - lower)))}

        return with_grid_retry(lambda g: self._build_profile(nm, g), task, self._grid())[1]

    def _name(self, name):
        if name is None:
            name = getattr(self, "interest", None)
        if name is None:
            raise ValidationError("name the parameter to profile")
        return name


class HigherOrderLogisticRegression(_ProfileInference, ClassifierMixin, BaseEstimator):
    """Logistic regression with higher-order inference for one coefficient.

    Parameters
    ----------
    interest : int
        Column of ``X`` whose coefficient is profiled.
    fit_intercept : bool
    level : float
        Default confidence level.
    grid : GridSpec, optional

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    se_ : ndarray
        Standard errors in the order ``coef_`` then intercept.
    """

    def __init__(self, interest: int = 0, fit_intercept: bool = True, level: float = 0.95, grid: GridSpec | None = None):
        self.interest = interest
        self.fit_intercept = fit_intercept
        self.level = level
        self.grid = grid

    def fit(self, X, y):
        from .logistic import BinaryDataset, fit_logistic

        X, y = check_X_y(X, y, dtype=float)
        k = int(self.interest)
        if not 0 <= k < X.shape[1]:
            raise ValidationError(f"interest column {k} outside 0..{X.shape[1] - 1}")
        others = [j for j in range(X.shape[1]) if j != k]
        cols = ([np.ones(len(y))] if self.fit_intercept else []) + [X[:, j] for j in others]
        names = (("intercept",) if self.fit_intercept else ()) + tuple(f"x{j}" for j in others)
        Xn = np.column_stack(cols) if cols else np.zeros((len(y), 0))
        self.data_ = BinaryDataset(y, Xn, X[:, [k]], names, (f"x{k}",))
        self.data_.check_rank()
        self.fit_ = fit_logistic(self.data_)
        theta, se = self.fit_.theta, self.fit_.se
        coef = np.empty(X.shape[1])
        coef[k] = theta[0]
        off = 2 if self.fit_intercept else 1
        coef[others] = theta[off:]
        self.coef_ = coef
        self.intercept_ = float(theta[1]) if self.fit_intercept else 0.0
        se_coef = np.empty(X.shape[1])
        se_coef[k] = se[0]
        se_coef[others] = se[off:]
        self.se_ = np.append(se_coef, se[1]) if self.fit_intercept else se_coef
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "fit_")
        X = np.asarray(X, float)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(float)

    def _name(self, name):
        if name not in (None, self.interest, f"x{self.interest}"):
            raise ValidationError("only the interest coefficient can be profiled; refit with another interest")
        return 0

    def _build_profile(self, name, grid):
        from .logistic import profile_logistic

        return profile_logistic(self.data_, 0, grid=grid, fit=self.fit_)


class RegressionScaleRegressor(_ProfileInference, RegressorMixin, BaseEstimator):
    """Linear regression with a known error law, ``y = X beta + sigma e``.

    Parameters
    ----------
    law : str
        Error law name (``"normal"``, ``"logistic"``, ``"cauchy"``,
        ``"logweibull"``, ``"student_t"``).
    df : float, optional
        Degrees of freedom for ``"student_t"``.
    fit_intercept : bool
    interest : str, optional
        Default parameter for inference (``"x0"``, ``"intercept"``, ``"log_sigma"`` ...).

    Attributes
    ----------
    coef_, intercept_, sigma_, names_
    """

    def __init__(self, law: str = "normal", df: float | None = None, fit_intercept: bool = True,
                 interest: str | None = None, level: float = 0.95, grid: GridSpec | None = None):
        self.law = law
        self.df = df
        self.fit_intercept = fit_intercept
        self.interest = interest
        self.level = level
        self.grid = grid

    def fit(self, X, y):
        from .regscale import fit_rsm, get_law

        X, y = check_X_y(X, y, dtype=float)
        self.law_ = get_law(self.law, self.df)
        names = (("intercept",) if self.fit_intercept else ()) + tuple(f"x{j}" for j in range(X.shape[1]))
        self.design_ = np.column_stack([np.ones(len(y)), X]) if self.fit_intercept else X
        self.y_ = y
        self.names_ = names + ("log_sigma",)
        self.fit_, self.ancillary_ = fit_rsm(y, self.design_, self.law_, names=names)
        p = self.design_.shape[1]
        beta = self.fit_.theta[:p]
        self.coef_ = beta[1:] if self.fit_intercept else beta
        self.intercept_ = float(beta[0]) if self.fit_intercept else 0.0
        self.sigma_ = float(np.exp(self.fit_.theta[p]))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Location ``X beta``; the error law need not have mean zero."""
        check_is_fitted(self, "fit_")
        return np.asarray(X, float) @ self.coef_ + self.intercept_

    def _build_profile(self, name, grid):
        from .regscale import rsm_profile

        return rsm_profile(self.y_, self.design_, self.law_, name, grid=grid, fit=self.fit_, names=self.names_[:-1])


class NonlinearHeteroscedasticRegressor(_ProfileInference, RegressorMixin, BaseEstimator):
    """Gaussian nonlinear regression ``y = mu(x; beta) + sigma w(x; beta, rho) e``.

    Parameters
    ----------
    mean, variance : str or callable
        Mean and relative variance as expressions (or callables) of the
        parameters and the covariate ``x``; the variance may use ``mu``.
    beta, rho : sequence of str
        Mean and variance parameter names.
    positive : sequence of str
        Parameters estimated on the log scale.
    start : mapping
        Starting values for every parameter except ``sigma^2``.
    variant : {"skovgaard", "frw"}
        Construction of ``q``.
    adjust : {"m1", "m2"} or None
        Adjusted profile likelihood recorded with each profile.
    """

    def __init__(self, mean=None, variance=None, beta: Sequence[str] = (), rho: Sequence[str] = (),
                 positive: Sequence[str] = (), start: Mapping[str, float] | None = None, variant: str = "skovgaard",
                 adjust: str | None = None, interest: str | None = None, level: float = 0.95,
                 grid: GridSpec | None = None):
        self.mean = mean
        self.variance = variance
        self.beta = beta
        self.rho = rho
        self.positive = positive
        self.start = start
        self.variant = variant
        self.adjust = adjust
        self.interest = interest
        self.level = level
        self.grid = grid

    def _model(self, x, y):
        from .nlreg import NLModel

        if self.mean is None or not self.beta:
            raise ValidationError("mean and beta must be given")
        return NLModel(x, y, self.mean, self.variance, tuple(self.beta), tuple(self.rho), tuple(self.positive))

    def fit(self, X, y):
        from .nlreg import fit_nlreg

        if self.start is None:
            raise ValidationError("start values are required")
        x = np.asarray(X, float)
        if x.ndim == 2:
            if x.shape[1] != 1:
                raise ValidationError("a single covariate column is expected")
            x = x[:, 0]
        self.model_ = self._model(x, y)
        self.fit_ = fit_nlreg(self.model_, self.start)
        est, se = self.fit_.natural_estimates()
        self.names_ = self.model_.names
        self.params_ = dict(zip(self.names_, map(float, est)))
        self.se_ = dict(zip(self.names_, map(float, se)))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        from .nlreg.autodiff import Jet

        check_is_fitted(self, "fit_")
        x = np.asarray(X, float).ravel()
        env = {}
        for nm, t in zip(self.names_, self.fit_.theta):
            env[nm] = float(np.exp(t)) if nm in self.model_.positive else float(t)
        mu = self.model_.mean(x, env)
        return np.broadcast_to(mu.val if isinstance(mu, Jet) else np.asarray(mu, float), x.shape).copy()

    def mpl(self, variant: str = "m1", names: Sequence[str] | None = None):
        """Adjusted profile likelihood estimates of variance parameters."""
        from .nlreg import mpl_estimates

        check_is_fitted(self, "fit_")
        return mpl_estimates(self.model_, self.fit_, variant=variant, interest=names)

    def _default_grid(self) -> GridSpec:
        return GridSpec(skip=0.05, bridge=False, singular=0.0)

    def _build_profile(self, name, grid):
        from .nlreg import rstar_profile_nlreg

        return rstar_profile_nlreg(self.model_, self.fit_, name, variant=self.variant, grid=grid, adjust=self.adjust)
