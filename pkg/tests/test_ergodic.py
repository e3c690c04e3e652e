import math
import warnings

import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given
from hypothesis import strategies as st

from eeopt.ergodic import (
    DiscreteFading,
    ErgodicProblem,
    RayleighFading,
    TabulatedFading,
    averages,
    averages_quadrature,
    deterministic_scenario,
    eval_F_pdf,
    eval_F_rayleigh,
    independent_rayleigh,
    mimo_scenario,
    policy,
    solve_ergodic,
    solve_parallel_fading,
)
from eeopt.exceptions import DomainError, InfeasibleError
from eeopt.fracprog import Status
from eeopt.waterfill import ParallelChannel, StaticEEProblem, eval_F, solve_static

# 40-digit mpmath root of E1(x) - x*(1 + exp(-x)/x - E1(x)) for mean CNR 1, mu 1
LAM_RAYLEIGH = 0.35796788119639208
# same expression at lam = 1
F_RAYLEIGH_AT_1 = -0.92911157238040177


class TestPolicy:
    @pytest.mark.parametrize("lam,g,p", [(1.0, 2.0, 0.5), (1.0, 0.5, 0.0), (1.0, 1.0, 0.0)])
    def test_values(self, lam, g, p):
        assert policy(lam, g) == p

    def test_vectorized(self):
        np.testing.assert_allclose(policy(1.0, np.array([0.5, 2.0, 4.0])), [0.0, 0.5, 0.75])


class TestRayleighClosedForm:
    def test_frozen_value(self):
        assert eval_F_rayleigh(1.0, 1.0, 1.0) == pytest.approx(F_RAYLEIGH_AT_1, rel=1e-13)

    def test_diverges_near_zero(self):
        assert eval_F_rayleigh(1.0, 1.0, 1e-12) > 25.0

    @given(st.floats(0.1, 100.0), st.floats(0.01, 10.0), st.floats(0.01, 10.0))
    def test_matches_quadrature(self, gbar, mu, frac):
        lam = frac * gbar
        prob = ErgodicProblem(RayleighFading(gbar), mu)
        assert eval_F_rayleigh(gbar, mu, lam) == pytest.approx(eval_F_pdf(prob, lam), rel=1e-8, abs=1e-12)

    def test_quadrature_averages(self):
        f = RayleighFading(2.0)
        for lam in (0.05, 1.0, 7.0):
            np.testing.assert_allclose(averages_quadrature(f, lam), averages(f, lam), rtol=1e-9)


class TestSolveErgodic:
    def test_unit_mean(self):
        sol = solve_ergodic(ErgodicProblem(RayleighFading(1.0), 1.0), tol=1e-12)
        assert sol.lam == pytest.approx(LAM_RAYLEIGH, rel=1e-12)
        assert abs(eval_F_rayleigh(1.0, 1.0, sol.lam)) < 1e-10
        assert sol.idle_probability == pytest.approx(1 - math.exp(-sol.lam), abs=1e-12)
        assert sol.ee == pytest.approx(sol.lam, rel=1e-10)

    def test_bisection_quadrature_route(self):
        prob = ErgodicProblem(RayleighFading(1.0), 1.0)
        a = solve_ergodic(prob, tol=1e-12)
        b = solve_ergodic(prob, method="bisection", quadrature=True)
        assert b.lam == pytest.approx(a.lam, rel=1e-10)

    def test_idle_at_mean(self):
        f = RayleighFading(3.0)
        assert 1 - f.cdf(3.0) == pytest.approx(math.exp(-1.0))

    def test_monotone_in_mu(self):
        sols = [solve_ergodic(ErgodicProblem(RayleighFading(1.0), mu)) for mu in np.logspace(-2, 2, 20)]
        lams = [s.lam for s in sols]
        powers = [s.avg_power for s in sols]
        assert np.all(np.diff(lams) < 0)
        assert np.all(np.diff(powers) > 0)

    def test_power_cap_met_with_equality(self):
        sol = solve_ergodic(ErgodicProblem(RayleighFading(1.0), 10.0, avg_power_max=1.0))
        assert sol.status is Status.CLAMPED_MIN
        assert sol.avg_power == pytest.approx(1.0, rel=1e-10)

    def test_rate_floor(self):
        sol = solve_ergodic(ErgodicProblem(RayleighFading(1.0), 0.01, avg_rate_min=1.0))
        assert sol.status is Status.CLAMPED_MAX
        assert sol.avg_rate == pytest.approx(1.0, rel=1e-10)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            solve_ergodic(ErgodicProblem(RayleighFading(1.0), 1.0, avg_power_max=0.01, avg_rate_min=3.0))

    def test_point_mass_equals_static(self):
        g0, mu = 2.5, 0.7
        prob = ErgodicProblem(DiscreteFading.point(g0), mu)
        static = StaticEEProblem(ParallelChannel([g0]), mu)
        for lam in (0.3, 1.0, 2.0):
            assert eval_F_pdf(prob, lam) == pytest.approx(eval_F(static, lam)[0], rel=1e-14)
        assert solve_ergodic(prob).lam == pytest.approx(solve_static(static).lam, rel=1e-10)

    def test_beyond_support(self):
        prob = ErgodicProblem(DiscreteFading([1.0, 2.0], [0.5, 0.5]), 0.4)
        assert eval_F_pdf(prob, 3.0) == pytest.approx(-3.0 * 0.4)

    def test_tabulated_exponential(self):
        grid = np.linspace(0.0, 40.0, 4001)
        dens = np.exp(-grid)
        dens /= trapezoid(dens, grid)
        sol = solve_ergodic(ErgodicProblem(TabulatedFading(grid, dens), 1.0))
        assert sol.lam == pytest.approx(LAM_RAYLEIGH, rel=1e-4)

    def test_tabulated_exact_vs_quadrature(self):
        grid = np.array([0.0, 1.0, 2.0, 4.0])
        dens = np.array([0.2, 0.4, 0.3, 0.0])
        dens = dens / trapezoid(dens, grid)
        f = TabulatedFading(grid, dens)
        for lam in (0.1, 0.9, 1.5, 3.0):
            np.testing.assert_allclose(f.tail_averages(lam), averages_quadrature(f, lam), rtol=1e-9)

    def test_tabulated_mass_check(self):
        with pytest.raises(DomainError):
            TabulatedFading(np.array([0.0, 1.0]), np.array([1.0, 3.0]))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            solve_ergodic(ErgodicProblem(RayleighFading(1.0), 1.0), method="secant")


class TestParallelFading:
    def test_single_rayleigh_within_three_sigma(self):
        exact = solve_ergodic(ErgodicProblem(RayleighFading(1.0), 1.0))
        mc = solve_parallel_fading(independent_rayleigh([1.0], n_samples=100_000, seed=3), 1.0)
        assert abs(mc.ee - exact.ee) <= 3 * mc.std_error
        p = exact.idle_probability
        assert abs(mc.idle_probability - p) <= 3 * math.sqrt(p * (1 - p) / mc.n_samples)

    def test_deterministic_matches_static(self):
        g = [3.0, 1.0, 0.25]
        mc = solve_parallel_fading(deterministic_scenario(g), 0.5)
        st_ = solve_static(StaticEEProblem(ParallelChannel(g), 0.5))
        assert mc.lam == st_.lam
        assert mc.ee == st_.ee

    def test_deterministic_seed(self):
        sc = independent_rayleigh([1.0, 0.5], n_samples=5000, seed=11)
        a = solve_parallel_fading(sc, 1.0)
        b = solve_parallel_fading(sc, 1.0)
        assert (a.lam, a.ee, a.std_error) == (b.lam, b.ee, b.std_error)
        c = solve_parallel_fading(sc.with_samples(5000, seed=12), 1.0)
        assert c.ee != a.ee

    def test_undersampling_warns(self):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            sol = solve_parallel_fading(independent_rayleigh([1.0], n_samples=50, seed=0), 1.0)
        assert sol.undersampled
        assert any(issubclass(x.category, RuntimeWarning) for x in w)

    def test_average_power_cap(self):
        sc = independent_rayleigh([2.0, 1.0], n_samples=20_000, seed=5)
        sol = solve_parallel_fading(sc, 10.0, avg_power_max=1.0)
        assert sol.status is Status.CLAMPED_MIN
        assert sol.avg_power == pytest.approx(1.0, rel=1e-9)


class TestMimoScenario:
    def test_siso_is_exponential(self):
        g = mimo_scenario(1, 1, 1.0, n_samples=200_000, seed=1).sample()[:, 0]
        assert g.mean() == pytest.approx(1.0, abs=0.01)
        assert np.mean(g > 1.0) == pytest.approx(math.exp(-1.0), abs=0.005)

    def test_miso_is_sum_of_two_exponentials(self):
        g = mimo_scenario(2, 1, 1.0, n_samples=200_000, seed=2).sample()
        assert g.shape == (200_000, 1)
        # Gamma(2, 1): mean 2, variance 2
        assert g.mean() == pytest.approx(2.0, abs=0.02)
        assert g.var() == pytest.approx(2.0, abs=0.05)

    def test_total_gain(self):
        g = mimo_scenario(2, 3, 5.0, n_samples=50_000, seed=4).sample()
        assert g.shape[1] == 2
        assert np.all(np.diff(g, axis=1) <= 0)
        assert g.sum(axis=1).mean() == pytest.approx(5.0 * 6, rel=0.01)

    def test_domain(self):
        with pytest.raises(DomainError):
            mimo_scenario(0, 1, 1.0)
        with pytest.raises(DomainError):
            mimo_scenario(1, 1, 0.0)
