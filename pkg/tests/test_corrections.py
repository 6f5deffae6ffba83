import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hoinfer.core import ModelSpec, ParamPartition, constrained_maximize, maximize_likelihood
from hoinfer.corrections import (
    QIngredients,
    adjusted_profile,
    barndorff_nielsen,
    lugannani_rice,
    midp_significance,
    modified_root,
    multiparameter_u,
    q_general,
    q_skovgaard,
    tail_areas,
    w_star,
)
from hoinfer.exceptions import InvalidCorrectionError, SingularZoneError, UnsupportedVariantError, ValidationError

N_EXP, S_EXP = 5, 3.7


def exponential_model(n=N_EXP, s=S_EXP):
    """Exponential sample summarized by ``n`` and the total ``s``; working parameter log rate."""
    return ModelSpec(
        1,
        lambda t: float(n * t[0] - np.exp(t[0]) * s),
        lambda t: np.array([n - np.exp(t[0]) * s]),
        lambda t: np.array([[np.exp(t[0]) * s]]),
        partition=ParamPartition.from_interest(0, 1),
        scales=("log",),
    )


def exponential_ingredients(n=N_EXP):
    return QIngredients(
        "canonical-expfam",
        phi=lambda t: np.array([np.exp(t[0])]),
        phi_dtheta=lambda t: np.array([[np.exp(t[0])]]),
        S=lambda t1, t2: np.array([[n * np.exp(t2[0] - t1[0])]]),
        Q=lambda t1, t2: np.array([n * (1 - np.exp(t2[0] - t1[0]))]),
        exp_info=lambda t: np.array([[float(n)]]),
    )


def pieces(lam):
    model = exponential_model()
    fit = maximize_likelihood(model, [0.0])
    cf = constrained_maximize(model, np.log(lam))
    w = 2 * (fit.loglik - cf.loglik)
    r = np.sign(fit.theta[0] - np.log(lam)) * np.sqrt(w)
    return fit, cf, r


def test_lugannani_rice_reference_value():
    # Phi(1) + phi(1) (1 - 1/2)
    assert lugannani_rice(1.0, 2.0) == pytest.approx(stats.norm.cdf(1) + 0.5 * stats.norm.pdf(1), abs=1e-15)


def test_tail_formulas_and_errors():
    res = tail_areas(1.2, 1.0)
    assert res.r_star == pytest.approx(1.2 + np.log(1 / 1.2) / 1.2)
    assert res.p_bn == pytest.approx(stats.norm.cdf(res.r_star))
    assert res.in_unit_interval
    with pytest.raises(SingularZoneError):
        lugannani_rice(0.1, 0.1)
    with pytest.raises(InvalidCorrectionError):
        barndorff_nielsen(1.0, -1.0)
    with pytest.raises(InvalidCorrectionError):
        lugannani_rice(1.0, 0.0)
    with pytest.raises(ValidationError):
        lugannani_rice(np.nan, 1.0)
    out = modified_root(np.array([1.0, -1.0, 1.0]), np.array([2.0, -0.5, -1.0]))
    assert np.isnan(out[2]) and out[0] == pytest.approx(1 + np.log(2.0))


@pytest.mark.parametrize("lam", [0.3, 0.6, 2.5, 4.0])
def test_exponential_rate_tail_areas_against_gamma(lam):
    fit, cf, r = pieces(lam)
    q = q_general(exponential_ingredients(), fit, cf)
    exact = stats.gamma.sf(S_EXP, N_EXP, scale=1 / lam)
    assert stats.norm.cdf(modified_root(r, q)) == pytest.approx(exact, abs=2e-3)
    assert lugannani_rice(r, q) == pytest.approx(exact, abs=2e-3)
    assert abs(stats.norm.cdf(r) - exact) > abs(stats.norm.cdf(modified_root(r, q)) - exact)


@pytest.mark.parametrize("lam", [0.4, 1.9, 3.0])
def test_score_covariance_q_equals_canonical_q_in_full_exponential_family(lam):
    fit, cf, _ = pieces(lam)
    ingr = exponential_ingredients()
    assert q_skovgaard(ingr, fit, cf) == pytest.approx(q_general(ingr, fit, cf), rel=1e-12)


def test_multiparameter_u_reduces_to_r_over_q():
    fit, cf, r = pieces(3.0)
    ingr = exponential_ingredients()
    q = q_skovgaard(ingr, fit, cf)
    u = multiparameter_u(ingr, fit, cf, r * r)
    assert u == pytest.approx(r / q, rel=1e-12)
    assert w_star(r * r, u) == pytest.approx(modified_root(r, q) ** 2, rel=1e-10, abs=1e-10)


@given(st.floats(0.3, 6.0), st.floats(0.2, 5.0))
def test_wstar_scalar_reduction(r, ratio):
    q = r * ratio
    u = r / q
    assert w_star(r * r, u) == pytest.approx(modified_root(r, q) ** 2, rel=1e-10, abs=1e-10)


@given(st.lists(st.integers(1, 50), min_size=2, max_size=8))
def test_midp_is_average_of_cdf_limits(weights):
    pmf = np.array(weights, float) / sum(weights)
    support = np.arange(len(pmf), dtype=float)
    for k, t in enumerate(support):
        mid = midp_significance(support, pmf, t)
        left, right = pmf[:k].sum(), pmf[: k + 1].sum()
        assert mid == pytest.approx(0.5 * (left + right))


def test_adjusted_profile_of_quadratic():
    psi = np.linspace(-3, 3, 41)
    lp = -0.5 * (psi - 0.4) ** 2 / 0.25
    adj = adjusted_profile(psi, lp, 0.1 * psi, "test")
    # maximizer of -2 (psi - 0.4)^2 + 0.1 psi
    assert adj.psi_hat_a == pytest.approx(0.4 + 0.1 * 0.25, abs=1e-8)
    assert adj.se_a == pytest.approx(0.5, rel=1e-6)
    assert adj.r_a(adj.psi_hat_a) == pytest.approx(0.0, abs=1e-6)


def test_missing_ingredients_raise():
    fit, cf, _ = pieces(2.0)
    with pytest.raises(UnsupportedVariantError):
        q_general(QIngredients("x"), fit, cf)
    with pytest.raises(UnsupportedVariantError):
        q_skovgaard(QIngredients("x"), fit, cf)
    with pytest.raises(InvalidCorrectionError):
        w_star(1.0, -1.0)
