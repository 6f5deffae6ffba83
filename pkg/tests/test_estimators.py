import numpy as np
import pytest
from sklearn.base import clone

from hoinfer import (
    GridSpec,
    HigherOrderLogisticRegression,
    NonlinearHeteroscedasticRegressor,
    RegressionScaleRegressor,
    ValidationError,
)
from hoinfer.logistic import profile_logistic
from hoinfer.profiling import standard_intervals
from hoinfer.regscale import NORMAL, rsm_profile

from conftest import simulate_logweibull


def _urine_arrays(urine):
    # interest first, then the covariates other than the intercept
    return np.column_stack([urine.Z[:, 0], urine.X[:, 1:]]), urine.y


def test_logistic_estimator_matches_functional_api(urine, urine_fit):
    X, y = _urine_arrays(urine)
    est = HigherOrderLogisticRegression(interest=0).fit(X, y)
    assert est.coef_[0] == pytest.approx(urine_fit.theta[0], rel=1e-8)
    assert est.intercept_ == pytest.approx(urine_fit.theta[1], rel=1e-8)
    ref = standard_intervals(profile_logistic(urine, 0, fit=urine_fit), ["r", "rstar"])
    for pivot in ("r", "rstar"):
        assert est.conf_int(pivot=pivot) == pytest.approx(ref[pivot], abs=1e-9)
    assert np.round(est.conf_int(pivot="wald_a"), 4).tolist() == [-0.0568, 0.0016]
    assert round(est.pvalue(0.0, pivot="wald")["two_sided"], 3) == 0.047
    proba = est.predict_proba(X)
    assert proba.shape == (len(y), 2) and np.allclose(proba.sum(axis=1), 1.0)
    assert set(np.unique(est.predict(X))) <= {0.0, 1.0}
    with pytest.raises(ValidationError):
        est.profile("x1")


def test_estimators_clone_and_expose_parameters():
    grid = GridSpec(points=30)
    for est in (HigherOrderLogisticRegression(interest=2, grid=grid), RegressionScaleRegressor(law="cauchy", level=0.9),
                NonlinearHeteroscedasticRegressor(mean="a + b * x", beta=("a", "b"), start={"a": 0, "b": 0})):
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert twin is not est
    est = RegressionScaleRegressor().set_params(law="logistic")
    assert est.get_params()["law"] == "logistic"


def test_regression_scale_estimator_normal_law_is_least_squares():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((20, 2))
    y = 1.0 + X @ [0.5, -1.0] + 0.7 * rng.standard_normal(20)
    est = RegressionScaleRegressor(law="normal", interest="x0").fit(X, y)
    D = np.column_stack([np.ones(20), X])
    beta, rss = np.linalg.lstsq(D, y, rcond=None)[:2]
    np.testing.assert_allclose(np.append(est.intercept_, est.coef_), beta, rtol=1e-8)
    assert est.sigma_ == pytest.approx(np.sqrt(rss[0] / 20), rel=1e-8)
    np.testing.assert_allclose(est.predict(X), D @ beta, rtol=1e-8)
    ref = standard_intervals(rsm_profile(y, D, NORMAL, 1), ["rstar"])["rstar"]
    assert est.conf_int() == pytest.approx(ref, abs=1e-8)
    assert est.names_ == ("intercept", "x0", "x1", "log_sigma")


def test_regression_scale_estimator_log_sigma_interval():
    X, y = simulate_logweibull(n=15, p=2, seed=4)
    est = RegressionScaleRegressor(law="logweibull").fit(X[:, 1:], y)
    lo, hi = est.conf_int("log_sigma", pivot="rstar")
    assert lo < np.log(est.sigma_) < hi


def test_nonlinear_estimator():
    rng = np.random.default_rng(6)
    x = np.repeat(np.linspace(0.2, 3, 8), 3)
    y = 2.0 * np.exp(-0.7 * x) + 0.05 * rng.standard_normal(len(x))
    est = NonlinearHeteroscedasticRegressor(mean="a * exp(-b * x)", beta=("a", "b"), positive=("a", "b"),
                                            start={"a": 1.0, "b": 1.0}, interest="b").fit(x[:, None], y)
    assert est.params_["a"] == pytest.approx(2.0, rel=0.05)
    assert est.params_["b"] == pytest.approx(0.7, rel=0.05)
    np.testing.assert_allclose(est.predict(x), est.params_["a"] * np.exp(-est.params_["b"] * x), rtol=1e-10)
    lo, hi = est.conf_int(pivot="rstar")
    assert lo < est.params_["b"] < hi
    m1 = est.mpl("m1")
    assert m1.names == ("log_sigma2",)
    with pytest.raises(ValidationError):
        NonlinearHeteroscedasticRegressor(mean="a", beta=("a",)).fit(x, y)
