"""Machine-count planning: worked reference numbers and boundary properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from splitavg import (
    ConfigError,
    FixedPRegime,
    HighDimRegime,
    InfeasiblePlanError,
    LossSpec,
    NoiseDist,
    PlannerProblem,
    choose_m,
    ols_gammas,
    predicted_error,
    ridge_gammas,
)


def ols_problem(mode, size, eps, constraint="absolute", p=100, sigma2=10.0):
    return PlannerProblem(mode=mode, size=size, constraint=constraint, eps=eps,
                          regime=FixedPRegime(ols_gammas(None, sigma2, p)))


def test_predicted_error_reference_value():
    prob = ols_problem("fixed_N", 10 ** 6, 2e-3)
    # sigma^2 p / N + m (1+p) sigma^2 p / N^2 at m = 9901
    assert predicted_error(prob, 9901) == pytest.approx(2e-3, abs=1e-8)
    assert predicted_error(prob, 1) == pytest.approx(
        1e-3 + 101 * 10 * 100 / 1e12, rel=1e-12)


def test_predicted_error_high_dim_squared_closed_form():
    regime = HighDimRegime(loss=LossSpec.squared(), noise=NoiseDist.gaussian(2.0), p=50)
    prob = PlannerProblem(mode="fixed_n", size=250, constraint="absolute",
                          eps=1.0, regime=regime)
    kappa = 50 / 250
    for m in (1, 4):
        expect = kappa * 2.0 / (1 - kappa) / m  # r^2(kappa) Tr(I)/ (m p)
        assert predicted_error(prob, m) == pytest.approx(expect, rel=1e-8)


def test_choose_m_fixed_N_reference():
    result = choose_m(ols_problem("fixed_N", 10 ** 6, 2e-3))
    assert result.m == 9901
    assert result.binding


def test_choose_m_fixed_n_reference():
    result = choose_m(ols_problem("fixed_n", 10 ** 4, 2e-3))
    assert result.m == 51
    assert result.binding
    assert result.achieved_error <= 2e-3


def test_choose_m_relative_fixed_N_reference():
    result = choose_m(ols_problem("fixed_N", 10 ** 6, 0.1, constraint="relative"))
    assert result.m in (990, 991)
    assert result.m == 991  # boundary 991.199 -> nearest


def test_relative_fixed_n_is_trivially_one():
    result = choose_m(ols_problem("fixed_n", 10 ** 4, 0.1, constraint="relative"))
    assert result.m == 1
    assert not result.binding


def test_infeasible_fixed_N_reports_single_machine_error():
    with pytest.raises(InfeasiblePlanError) as info:
        choose_m(ols_problem("fixed_N", 10 ** 6, 1e-5))
    assert info.value.error_at_one == pytest.approx(predicted_error(
        ols_problem("fixed_N", 10 ** 6, 1e-5), 1))


def test_fixed_n_unreachable_bound_is_infeasible():
    # ridge keeps a bias floor (gamma0 term) no machine count can beat
    gam = ridge_gammas(np.array([10.0, 0.0]), 1.0, 1.0)
    floor = float(np.trace(gam.gamma0)) / 100 ** 2
    prob = PlannerProblem(mode="fixed_n", size=100, constraint="absolute",
                          eps=floor * 0.9, regime=FixedPRegime(gam))
    with pytest.raises(InfeasiblePlanError):
        choose_m(prob)


def test_monotonicity_of_predicted_error():
    fixed_n = ols_problem("fixed_n", 1000, 1.0)
    errs = [predicted_error(fixed_n, m) for m in (1, 2, 5, 10, 100)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    fixed_N = ols_problem("fixed_N", 10 ** 5, 1.0)
    errs = [predicted_error(fixed_N, m) for m in (1, 2, 5, 10, 100)]
    assert all(b > a for a, b in zip(errs, errs[1:]))


def test_high_dim_kappa_domain_errors():
    regime = HighDimRegime(loss=LossSpec.squared(), noise=NoiseDist.gaussian(1.0), p=50)
    prob = PlannerProblem(mode="fixed_N", size=1000, constraint="absolute",
                          eps=10.0, regime=regime)
    with pytest.raises(InfeasiblePlanError):
        predicted_error(prob, 30)  # kappa = 50*30/1000 = 1.5
    # generous bound: capped by the kappa < 1 domain, not by the error bound
    result = choose_m(prob)
    assert result.m <= 19
    assert not result.binding
    assert predicted_error(prob, result.m) <= 10.0


def test_high_dim_fixed_N_binding_bound():
    regime = HighDimRegime(loss=LossSpec.squared(), noise=NoiseDist.gaussian(1.0), p=10)
    prob = PlannerProblem(mode="fixed_N", size=10 ** 5, constraint="absolute",
                          eps=2e-4, regime=regime)
    result = choose_m(prob)
    assert result.binding
    # boundary: kappa/(1-kappa)/m * 10/10 = eps with kappa = 10 m / 1e5
    f = lambda m: predicted_error(prob, m) - 2e-4
    m_star = brentq(f, 1, 9000)
    assert abs(result.m - m_star) <= 0.5 + 1e-9


@given(p=st.integers(2, 60), sigma2=st.floats(0.5, 20), logn=st.floats(4, 7),
       eps_factor=st.floats(1.05, 3.0))
@settings(max_examples=40, deadline=None)
def test_boundary_nearest_property_fixed_N(p, sigma2, logn, eps_factor):
    N = int(10 ** logn)
    base = predicted_error(ols_problem("fixed_N", N, 1.0, p=p, sigma2=sigma2), 1)
    prob = ols_problem("fixed_N", N, base * eps_factor, p=p, sigma2=sigma2)
    result = choose_m(prob)
    if result.binding and result.m < N:
        # the real boundary must lie within half a machine of the answer
        lo = predicted_error(prob, max(1.0, result.m - 0.5))
        hi = predicted_error(prob, result.m + 0.5)
        assert lo <= prob.eps * (1 + 1e-9)
        assert hi >= prob.eps * (1 - 1e-9)


def test_problem_validation():
    gam = ols_gammas(None, 1.0, 3)
    with pytest.raises(ConfigError):
        PlannerProblem(mode="fixed", size=10, constraint="absolute", eps=1.0,
                       regime=FixedPRegime(gam))
    with pytest.raises(ConfigError):
        PlannerProblem(mode="fixed_n", size=10, constraint="absolute", eps=-1.0,
                       regime=FixedPRegime(gam))
    prob = ols_problem("fixed_n", 100, 1.0)
    with pytest.raises(ConfigError):
        predicted_error(prob, 0)
