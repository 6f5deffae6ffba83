import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoinfer.exceptions import NumericalError, UnsupportedVariantError, ValidationError
from hoinfer.fixtures.oracles import finite_difference_harness
from hoinfer.nlreg import (
    SIGMA2,
    Expression,
    NLModel,
    derivative_engine,
    fit_nlreg,
    mpl_estimates,
    nlreg_contour,
    rstar_profile_nlreg,
)

X_POINTS = np.linspace(0.1, 3.0, 7)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.1, 2.0), st.floats(-1.0, 1.0))
def test_forward_mode_matches_central_differences(a, b, c):
    text = "a * exp(-b * x) + c * log(1 + x^2) / sqrt(a + x)"
    params = ["a", "b", "c"]
    ad = derivative_engine(text, params, "x")(X_POINTS, [a, b, c])
    fd = derivative_engine(text, params, "x", method="fd")(X_POINTS, [a, b, c])
    np.testing.assert_allclose(ad.val, fd.val, rtol=1e-14)
    np.testing.assert_allclose(ad.grad, fd.grad, rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(ad.hess, fd.hess, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("text", ["a +", "__import__('os')", "a.real", "foo(a)", "exp(a, b)", "a if b else c"])
def test_expression_rejects_bad_syntax(text):
    with pytest.raises(ValidationError):
        Expression(text, {"a", "b", "c"})


def test_expression_rejects_unknown_names():
    with pytest.raises(ValidationError, match="unknown name"):
        Expression("a * z", {"a", "x"})
    assert Expression("2^3 - -1")({}) == 9.0


def _linear(seed=0, n=12, centred=False):
    rng = np.random.default_rng(seed)
    x = np.repeat(np.linspace(0, 2, n // 2), 2)
    if centred:
        x = x - x.mean()
    y = 1.0 + 0.5 * x + 0.3 * rng.standard_normal(n)
    return NLModel(x, y, "b0 + b1 * x", None, ("b0", "b1"))


def _expected_information(model, theta):
    """Observed information with the sufficient statistics replaced by their expectations.

    ``-d^2 l`` is affine in ``ybar - mu`` and in ``within + n (ybar - mu)^2``,
    so substituting ``mu`` and ``n v`` gives the expectation exactly.
    """
    twin = copy.copy(model)
    twin._cache = {}
    mu, v = model.moments(theta)
    twin.ybar = mu.val.copy()
    twin.within = model.counts * v.val
    return twin.evaluate(theta)[2]


def test_score_covariance_at_equal_arguments_is_expected_information(bioassay):
    model, fit = bioassay
    for theta in (fit.theta, fit.theta + 0.02):
        i = _expected_information(model, theta)
        np.testing.assert_allclose(model.score_covariance(theta, theta), i, rtol=1e-10, atol=1e-10 * np.abs(i).max())
        np.testing.assert_allclose(model.score_loglik_covariance(theta, theta), 0.0, atol=1e-12)


def test_score_and_information_match_finite_differences(bioassay):
    model, fit = bioassay
    theta = fit.theta + 0.01
    _, score, info = model.evaluate(theta)
    g = finite_difference_harness(model.loglik, theta).value
    H = finite_difference_harness(model.loglik, theta, kind="hessian").value
    np.testing.assert_allclose(score, g, rtol=1e-6, atol=1e-6 * np.abs(g).max())
    np.testing.assert_allclose(info, -H, rtol=1e-5, atol=1e-5 * np.abs(H).max())


def test_bioassay_jets_agree_with_finite_differences(bioassay):
    model, fit = bioassay
    assert model.check_derivatives(fit.theta) < 1e-5


def test_check_derivatives_raises_on_disagreement():
    model = _linear()
    with pytest.raises(NumericalError):
        model.check_derivatives(np.zeros(3), tol=-1.0)


@pytest.mark.parametrize("variant", ["m1", "m2"])
def test_adjusted_variance_is_reml_in_linear_models(variant):
    model = _linear(3)
    fit = fit_nlreg(model, {"b0": 0.0, "b1": 0.0})
    X = np.column_stack([np.ones(model.n), model.x])
    rss = np.sum((model.y - X @ np.linalg.lstsq(X, model.y, rcond=None)[0]) ** 2)
    est = mpl_estimates(model, fit, variant=variant)
    assert est.names == (SIGMA2,)
    assert np.exp(est.psi_hat_a[0]) == pytest.approx(rss / (model.n - 2), rel=1e-6)


def test_adjustment_variants_agree_on_bioassay(bioassay):
    model, fit = bioassay
    m1 = mpl_estimates(model, fit, variant="m1")
    m2 = mpl_estimates(model, fit, variant="m2")
    np.testing.assert_allclose(m1.psi_hat_a, m2.psi_hat_a, rtol=0.05, atol=0.02)
    with pytest.raises(UnsupportedVariantError):
        mpl_estimates(model, fit, variant="m3")


def test_unknown_q_variant():
    model = _linear()
    fit = fit_nlreg(model, [0.0, 0.0])
    with pytest.raises(UnsupportedVariantError):
        rstar_profile_nlreg(model, fit, "b1", variant="lr")


def test_linear_rstar_variants_coincide():
    model = _linear(5)
    fit = fit_nlreg(model, [0.0, 0.0])
    a = rstar_profile_nlreg(model, fit, "b1", variant="skovgaard")
    b = rstar_profile_nlreg(model, fit, "b1", variant="frw")
    ok = np.isfinite(a.rstar) & np.isfinite(b.rstar)
    np.testing.assert_allclose(a.rstar[ok], b.rstar[ok], rtol=1e-6, atol=1e-8)


def test_linear_contours_follow_the_wald_ellipse():
    model = _linear(1, centred=True)
    fit = fit_nlreg(model, [0.0, 0.0])
    cs = nlreg_contour(model, fit, ("b0", "b1"), points=30, width=4.0)
    n = model.n
    # w = n log(1 + wald / n) when sigma^2 is profiled out of a linear model
    np.testing.assert_allclose(cs.fields["w"], n * np.log1p(cs.fields["wald"] / n), rtol=1e-6, atol=1e-8)
    assert not cs.clipped["w"]
    # points on the w contour lie on the Wald ellipse at the matching level
    target = n * np.expm1(cs.level / n)
    d = cs.contours["w"][0] - cs.estimate
    prec = np.linalg.inv(fit.covariance[:2, :2])
    wald = np.einsum("ij,jk,ik->i", d, prec, d)
    np.testing.assert_allclose(wald, target, rtol=5e-3)


def test_orthogonal_parameters_have_perpendicular_traces():
    model = _linear(2, centred=True)
    fit = fit_nlreg(model, [0.0, 0.0])
    cs = nlreg_contour(model, fit, ("b0", "b1"), points=20)
    assert cs.trace_angle == pytest.approx(np.pi / 2, abs=1e-6)
    np.testing.assert_allclose(cs.traces["first"][:, 1], cs.estimate[1], atol=1e-6)


def test_contour_input_validation():
    model = _linear()
    fit = fit_nlreg(model, [0.0, 0.0])
    with pytest.raises(ValidationError):
        nlreg_contour(model, fit, ("b0", "b0"))
    with pytest.raises(ValidationError):
        nlreg_contour(model, fit, ("b0", "b1"), alpha=1.5)


def test_model_validation():
    with pytest.raises(ValidationError):
        NLModel([1, 2], [1, 2, 3], "b0", None, ("b0",))
    with pytest.raises(ValidationError):
        NLModel(np.arange(5.0), np.arange(5.0), "b0 + mu", None, ("b0", "mu"))
    with pytest.raises(ValidationError):
        NLModel(np.arange(2.0), np.arange(2.0), "b0 + b1 * x", None, ("b0", "b1"))
    model = _linear()
    with pytest.raises(ValidationError):
        fit_nlreg(model, {"b0": 1.0})
