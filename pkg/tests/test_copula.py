import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copula_selection.copula import (
    CopulaDomainError,
    clayton_cdf2,
    clayton_cdf3,
    clayton_eval,
    kendall_tau,
    log_logistic_cdf,
    logistic_cdf,
    logistic_quantile,
    theta_transform,
)


class TestLogistic:
    def test_known_values(self):
        assert logistic_cdf(0.0) == 0.5
        assert logistic_cdf(math.log(3.0)) == pytest.approx(0.75, abs=1e-15)

    def test_deep_left_tail_matches_extended_precision(self):
        v = logistic_cdf(-40.0)
        assert 0.0 < v < 1e-15
        mpmath.mp.dps = 50
        ref = float(1 / (1 + mpmath.exp(40)))
        assert v == pytest.approx(ref, rel=1e-14)

    def test_no_overflow_at_700(self):
        with np.errstate(all="raise"):
            assert logistic_cdf(700.0) == 1.0
            assert 0.0 <= logistic_cdf(-700.0) < 1e-300
            assert log_logistic_cdf(-700.0) == pytest.approx(-700.0)

    @given(st.floats(-700, 700))
    def test_log_cdf_consistent(self, x):
        p = logistic_cdf(x)
        if p > 1e-300:
            assert log_logistic_cdf(x) == pytest.approx(math.log(p), rel=1e-12, abs=1e-12)

    def test_quantile_inverts(self):
        assert logistic_quantile(0.5) == 0.0
        assert logistic_quantile(0.75) == pytest.approx(math.log(3.0))


class TestClayton:
    def test_trivariate_fixtures(self):
        assert clayton_cdf3(1, 1, 1, 2.0) == pytest.approx(1.0)
        assert clayton_cdf3(0.5, 1, 1, 2.0) == pytest.approx(0.5)
        assert clayton_cdf3(0.5, 0.5, 0.5, 1.0) == pytest.approx(0.25)

    def test_negative_theta_clamps_to_zero(self):
        bracket = 3 * 0.1**0.4 - 2
        assert bracket == pytest.approx(-0.8057, abs=1e-4)
        assert clayton_cdf3(0.1, 0.1, 0.1, -0.4) == 0.0

    def test_bivariate_fixtures(self):
        assert clayton_cdf2(0.5, 0.5, 1.0) == pytest.approx(1 / 3)
        for u in (0.1, 0.9):
            for th in (-0.3, 2.0):
                assert clayton_cdf2(u, 1.0, th) == pytest.approx(u, rel=1e-12)
        v = clayton_cdf2(0.3, 0.7, -0.3)
        assert 0.0 < v < 0.21
        assert v == pytest.approx((0.3**0.3 + 0.7**0.3 - 1) ** (1 / 0.3), rel=1e-12)

    def test_grounded_margin_reduces_to_bivariate(self):
        for th in (-0.3, 0.5, 3.0):
            assert clayton_cdf3(0.3, 0.6, 1.0, th) == pytest.approx(clayton_cdf2(0.3, 0.6, th), rel=1e-12)

    def test_independence_branch(self):
        assert clayton_cdf3(0.2, 0.3, 0.4, 1e-9) == pytest.approx(0.024, rel=1e-12)
        assert clayton_cdf2(0.2, 0.3, 0.0) == pytest.approx(0.06, rel=1e-12)

    def test_continuous_across_independence_threshold(self):
        a = clayton_cdf3(0.2, 0.3, 0.4, 2e-8)
        b = clayton_cdf3(0.2, 0.3, 0.4, 5e-9)
        assert a == pytest.approx(b, rel=1e-7)

    def test_domain_errors(self):
        with pytest.raises(CopulaDomainError):
            clayton_cdf3(0.5, 0.5, 0.5, -0.5)
        with pytest.raises(CopulaDomainError):
            clayton_cdf2(0.5, 0.5, -0.7)
        with pytest.raises(CopulaDomainError):
            clayton_cdf3(1.2, 0.5, 0.5, 1.0)

    @pytest.mark.parametrize("theta", [-0.45, -0.2, 0.5, 1.0, 5.0])
    def test_rectangle_masses_nonnegative(self, theta):
        grid = np.linspace(0.0, 1.0, 6)
        for i, j, k in itertools.product(range(5), repeat=3):
            mass = 0.0
            for a, b, c in itertools.product((0, 1), repeat=3):
                sign = (-1) ** (3 - a - b - c)
                mass += sign * clayton_cdf3(grid[i + a], grid[j + b], grid[k + c], theta)
            assert mass >= -1e-12

    @pytest.mark.parametrize("theta", [-0.4, -0.1, 0.3, 2.0, 7.0])
    def test_partials_match_finite_differences(self, theta):
        us = [np.array([0.3]), np.array([0.55]), np.array([0.8])]
        _, grads, dtheta = clayton_eval(us, theta)
        h = 1e-6
        for i in range(3):
            up = [u.copy() for u in us]
            dn = [u.copy() for u in us]
            up[i] += h
            dn[i] -= h
            fd = (clayton_eval(up, theta, False) - clayton_eval(dn, theta, False)) / (2 * h)
            assert grads[i][0] == pytest.approx(fd[0], rel=1e-6)
        fd = (clayton_eval(us, theta + h, False) - clayton_eval(us, theta - h, False)) / (2 * h)
        assert dtheta[0] == pytest.approx(fd[0], rel=1e-6)

    def test_theta_derivative_at_independence(self):
        us = [np.array([0.3]), np.array([0.6])]
        _, _, dtheta = clayton_eval(us, 0.0)
        h = 1e-5
        fd = (clayton_eval(us, h, False) - clayton_eval(us, -h, False)) / (2 * h)
        assert dtheta[0] == pytest.approx(fd[0], rel=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(-0.49, 20.0))
    def test_frechet_upper_bound(self, u, v, w, theta):
        c = clayton_cdf3(u, v, w, theta)
        assert -1e-15 <= c <= min(u, v, w) + 1e-12


class TestDependenceSummaries:
    def test_kendall_tau(self):
        assert kendall_tau(2.0) == 0.5
        assert kendall_tau(-0.353) == pytest.approx(-0.2143, abs=5e-4)
        assert kendall_tau(1e-12) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(CopulaDomainError):
            kendall_tau(-0.6)

    def test_theta_transform(self):
        assert theta_transform(0.0) == (0.0, 2.0)
        assert theta_transform(-1.0) == (-1.0, 0.0)
        assert theta_transform(1.0) == (3.0, 4.0)
