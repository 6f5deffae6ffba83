import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from hoinfer.exceptions import BudgetExceededError, ValidationError
from hoinfer.fixtures.golden import golden
from hoinfer.fixtures.oracles import enumerate_binary_reference_set, finite_difference_harness
from hoinfer.logistic import (
    BinaryDataset,
    conditional_counts,
    dataset_model,
    efficiency_curve,
    efficiency_ratio,
    exact_conditional_distribution,
    fit_logistic,
    lattice_scan,
    profile_logistic,
)
from hoinfer.profiling import standard_intervals


def test_urine_fit_and_intervals(urine, urine_fit):
    assert urine.n == 77
    assert golden("urine.psi_hat").matches(urine_fit.theta[0])
    assert golden("urine.se").matches(urine_fit.se[0])
    prof = profile_logistic(urine, fit=urine_fit)
    cis = standard_intervals(prof, ["wald", "wald_a", "r", "rstar"])
    for k in cis:
        assert golden(f"urine.ci.{k}").matches(cis[k]), k
    assert golden("urine.psi_hat_a").matches(prof.adjusted.psi_hat_a)
    assert golden("urine.se_a").matches(prof.adjusted.se_a)


def test_logistic_score_and_information_match_finite_differences(urine, urine_fit):
    model = dataset_model(urine)
    x = urine_fit.theta + 0.01
    g = finite_difference_harness(model.loglik, x).value
    np.testing.assert_allclose(model.score(x), g, rtol=1e-6, atol=1e-6 * np.max(np.abs(g)))
    H = finite_difference_harness(model.loglik, x, kind="hessian").value
    np.testing.assert_allclose(model.obs_info(x), -H, rtol=1e-5, atol=1e-5 * np.max(np.abs(H)))


def test_sixteen_fixture_statistics(sixteen):
    assert golden("sixteen.s").matches(sixteen.s)
    assert golden("sixteen.t").matches(sixteen.t[0])
    support, counts = conditional_counts(sixteen)
    assert golden("sixteen.support").matches(support)
    assert golden("sixteen.support_points").matches(len(support))
    s1, c1 = conditional_counts(sixteen, condition_on=[0])
    assert golden("sixteen.first_component_count").matches(sum(int(c) for c in c1))


def test_sixteen_counts_match_brute_force(sixteen):
    ref = enumerate_binary_reference_set(sixteen.X, sixteen.Z, sixteen.s)
    support, counts = conditional_counts(sixteen, method="sweep")
    assert ref.matched == sum(int(c) for c in counts)
    assert [ref.t_counts[t] for t in ref.support] == [int(c) for c in counts]


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 9), st.integers(0, 10**6))
def test_generating_function_equals_sweep_equals_oracle(n, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.integers(-2, 3, n)])
    Z = rng.integers(-2, 3, n).astype(float)
    y = rng.integers(0, 2, n).astype(float)
    data = BinaryDataset(y, X, Z[:, None])
    s1, c1 = conditional_counts(data, method="sweep")
    s2, c2 = conditional_counts(data, method="gf")
    ref = enumerate_binary_reference_set(X, Z, X.T @ y)
    np.testing.assert_array_equal(s1, s2)
    assert [int(c) for c in c1] == [int(c) for c in c2] == [ref.t_counts[t] for t in ref.support]


def test_degenerate_interest_column_gives_single_support_point():
    X = np.column_stack([np.ones(6), np.arange(6.0)])
    data = BinaryDataset(np.array([1, 0, 1, 0, 0, 1.0]), X, np.zeros((6, 1)))
    support, counts = conditional_counts(data)
    assert list(support) == [0.0]


def test_exact_pmf_tilting(sixteen):
    base = exact_conditional_distribution(sixteen, 0.0)
    tilted = base.at(0.3)
    assert tilted.pmf.sum() == pytest.approx(1.0)
    ratio = tilted.pmf / base.pmf
    np.testing.assert_allclose(ratio / ratio[0], np.exp(0.3 * (base.support - base.support[0])), rtol=1e-12)


def test_sweep_budget():
    data = BinaryDataset(np.zeros(31), np.ones((31, 1)), np.arange(31.0)[:, None])
    with pytest.raises(BudgetExceededError):
        conditional_counts(data, method="sweep")


@pytest.mark.parametrize("psi", [0.0, 0.05])
def test_rstar_interpolates_midp(sixteen, psi):
    rows = lattice_scan(sixteen, psi)
    for row, nxt in zip(rows, rows[1:]):
        if row.t <= 0:
            assert abs(row.phi_rstar - row.midp) <= 0.02
            # the continuity-corrected value sits on the step at level pr(T <= t)
            assert row.midp <= row.phi_rstar_half <= nxt.midp
            assert abs(row.phi_rstar_half - row.cdf) <= 0.02


def test_efficiency_at_zero_is_three_quarters():
    res = efficiency_curve(np.linspace(-1, 1, 21), 0.0, 0.0)
    assert golden("efficiency.max_ratio").matches(res.ratio[1])
    assert res.ratio[0] == pytest.approx(0.75, abs=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_efficiency_never_exceeds_three_quarters(lam, psi):
    res = efficiency_curve(np.linspace(-1, 1, 21), lam, psi)
    assert np.all(res.ratio <= 0.75 + 1e-12)


def test_efficiency_matches_direct_formula(urine, urine_fit):
    res = efficiency_ratio(urine.design, urine_fit.theta, urine.n)
    A = urine.design
    pi = expit(A @ urine_fit.theta)
    vb = np.linalg.inv(A.T @ (A * (pi * (1 - pi))[:, None]))[0, 0]
    vc = 3 * np.linalg.inv(A.T @ A)[0, 0]
    assert res.ratio[0] == pytest.approx(vc / vb, rel=1e-10)
    assert golden("urine.equiv_n_urea").matches(res.equivalent_n[0])
    assert golden("urine.equiv_n_range").matches(res.equivalent_n[1:])


def test_validation():
    with pytest.raises(ValidationError):
        BinaryDataset(np.array([0, 2.0]), np.ones((2, 1)), np.ones((2, 1)))
    data = BinaryDataset(np.array([0, 1, 1.0]), np.ones((3, 1)), np.ones((3, 1)))
    with pytest.raises(ValidationError):
        data.check_rank()
    with pytest.raises(ValidationError):
        efficiency_ratio(np.ones((4, 2)), np.zeros(2))


def test_separated_data_fails_to_converge():
    z = np.arange(8.0)
    y = (z > 3.5).astype(float)
    fit = fit_logistic(BinaryDataset(y, np.ones((8, 1)), z[:, None]))
    assert not fit.converged
