import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from hoinfer.core import constrained_maximize
from hoinfer.corrections import modified_root
from hoinfer.exceptions import UnsupportedVariantError, ValidationError
from hoinfer.fixtures.oracles import finite_difference_harness, student_t_oracle
from hoinfer.profiling import GridSpec, standard_intervals
from hoinfer.regscale import (
    CAUCHY,
    LAPLACE,
    LAWS,
    LOGWEIBULL,
    NORMAL,
    fit_rsm,
    get_law,
    log_conditional_density_pivots,
    q_exact_ancillary,
    q_tangent_frame,
    quadrature_oracle,
    rsm_model,
    rsm_profile,
    student_t,
)

SMOOTH = [law for law in LAWS.values() if law.smooth] + [student_t(4.0)]


@pytest.mark.parametrize("law", SMOOTH, ids=lambda law: law.name)
def test_law_derivatives_match_finite_differences(law):
    for e in (-1.3, 0.2, 1.7):
        d1 = finite_difference_harness(lambda v: law.g0(v[0]), [e]).value[0]
        d2 = finite_difference_harness(lambda v: law.g0_d1(v[0]), [e]).value[0]
        assert law.g0_d1(e) == pytest.approx(d1, rel=1e-6, abs=1e-9)
        assert law.g0_d2(e) == pytest.approx(d2, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("law", SMOOTH, ids=lambda law: law.name)
def test_law_densities_integrate_to_one(law):
    # exp(e) overflows far in the log-Weibull right tail; the density there is 0
    with np.errstate(over="ignore"):
        total = quad(lambda e: np.exp(-law.g0(e)), -np.inf, np.inf, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-7)


def test_law_lookup():
    assert get_law("normal") is NORMAL
    assert get_law("student_t", 3).name.startswith("student_t")
    with pytest.raises(ValidationError):
        get_law("gumbel")
    with pytest.raises(ValidationError):
        get_law("student_t")
    with pytest.raises(UnsupportedVariantError):
        LAPLACE.require_smooth()


def _location_scale(seed, n=6):
    rng = np.random.default_rng(seed)
    X = np.ones((n, 1))
    y = 1 + np.log(rng.weibull(1.0, n))
    return X, y


@pytest.mark.parametrize("shift", [-1.5, 0.8])
def test_rstar_matches_conditional_quadrature(shift):
    X, y = _location_scale(1)
    fit, anc = fit_rsm(y, X, LOGWEIBULL)
    model = rsm_model(y, X, LOGWEIBULL).with_interest(0)
    psi = fit.theta[0] + shift
    cf = constrained_maximize(model, psi, fit.theta)
    q = q_exact_ancillary(fit, cf, X, LOGWEIBULL, anc.a)
    r = np.sign(fit.theta[0] - psi) * np.sqrt(2 * (fit.loglik - cf.loglik))
    exact = quadrature_oracle(anc.a, X, LOGWEIBULL, 0, (fit.theta[0] - psi) / np.exp(fit.theta[1])).probability
    assert stats.norm.cdf(modified_root(r, q)) == pytest.approx(exact, abs=5e-3)
    assert abs(stats.norm.cdf(r) - exact) > abs(stats.norm.cdf(modified_root(r, q)) - exact)


def test_tangent_frame_q_equals_exact_ancillary_q(logweibull):
    X, y = logweibull
    fit, anc = fit_rsm(y, X, LOGWEIBULL)
    model = rsm_model(y, X, LOGWEIBULL).with_interest(2)
    cf = constrained_maximize(model, fit.theta[2] + 0.3, fit.theta)
    assert q_tangent_frame(fit, cf, y, X, LOGWEIBULL) == pytest.approx(
        q_exact_ancillary(fit, cf, X, LOGWEIBULL, anc.a), rel=1e-10)


def test_rsm_score_and_information(logweibull):
    X, y = logweibull
    model = rsm_model(y, X, LOGWEIBULL)
    x = np.append(np.linspace(0.5, -0.5, X.shape[1]), 0.1)
    g = finite_difference_harness(model.loglik, x).value
    np.testing.assert_allclose(model.score(x), g, rtol=1e-6, atol=1e-8)
    H = finite_difference_harness(model.loglik, x, kind="hessian").value
    np.testing.assert_allclose(model.obs_info(x), -H, rtol=1e-5, atol=1e-6)


def test_normal_law_rstar_close_to_student_t():
    rng = np.random.default_rng(4)
    n = 30
    X = np.ones((n, 1))
    y = rng.standard_normal(n)
    prof = rsm_profile(y, X, NORMAL, 0)
    lo, hi = standard_intervals(prof, ["rstar"])["rstar"]
    t = student_t_oracle(n, 1).ppf(0.975)
    s = y.std(ddof=1) / np.sqrt(n)
    assert lo == pytest.approx(y.mean() - t * s, abs=1e-3 * s)
    assert hi == pytest.approx(y.mean() + t * s, abs=1e-3 * s)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(0.2, 5.0))
def test_intervals_equivariant_under_affine_response_maps(a, b):
    X, y = _location_scale(3, n=8)
    grid = GridSpec(width=4.0, points=30)
    base = standard_intervals(rsm_profile(y, X, CAUCHY, 0, grid=grid), ["r", "rstar"])
    moved = standard_intervals(rsm_profile(a + b * y, X, CAUCHY, 0, grid=grid), ["r", "rstar"])
    for k in base:
        np.testing.assert_allclose(moved[k], a + b * np.asarray(base[k]), rtol=1e-5, atol=1e-5 * b)


def test_conditional_density_is_invariant_to_sample_relabelling():
    X, y = _location_scale(5, n=7)
    fit, anc = fit_rsm(y, X, LOGWEIBULL)
    perm = np.random.default_rng(0).permutation(len(y))
    a = log_conditional_density_pivots(np.array([0.3]), 1.2, anc.a, X, LOGWEIBULL)
    b = log_conditional_density_pivots(np.array([0.3]), 1.2, anc.a[perm], X[perm], LOGWEIBULL)
    assert a == pytest.approx(b, rel=1e-12)


def test_ancillary_reconstructs_the_sample(logweibull):
    X, y = logweibull
    fit, anc = fit_rsm(y, X, LOGWEIBULL)
    p = X.shape[1]
    np.testing.assert_allclose(anc.reconstruct(X, fit.theta[:p], np.exp(fit.theta[p])), y, atol=1e-10)
