import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eeopt.exceptions import BracketError, DomainError, InfeasibleError
from eeopt.fracprog import (
    LambdaBounds,
    ParametricSubproblem,
    Status,
    SubproblemSolution,
    bisection_solver,
    clamp_to_bounds,
    dinkelbach,
    minimize_reciprocal,
    ratio_start,
    solve_constrained,
    verify_kkt,
)
from eeopt.numerics import RootBracket
from eeopt.waterfill import ParallelChannel, StaticEEProblem, static_subproblem

# root of F for gamma = [4, 1], mu = 1, 40-digit mpmath root of the piecewise closed form
LAM_4_1 = 0.81462744875313567


def waterfill_sub(cnrs, mu=1.0, p_max=math.inf):
    return static_subproblem(StaticEEProblem(ParallelChannel(cnrs, p_max), mu))


def start(sub, g):
    return ratio_start(sub, 0.5 * max(g))


channels = st.lists(st.floats(min_value=0.05, max_value=50.0), min_size=1, max_size=6)
mus = st.floats(min_value=0.01, max_value=10.0)


class TestDinkelbach:
    def test_unit_channel(self):
        sub = waterfill_sub([1.0])
        tr = dinkelbach(sub, start(sub, [1.0]))
        assert tr.status is Status.CONVERGED
        assert tr.lam == pytest.approx(1.0 / math.e, rel=1e-12)
        assert tr.ee == pytest.approx(1.0 / math.e, rel=1e-12)

    def test_constant_ratio_one_step(self):
        tr = dinkelbach(ParametricSubproblem.constant(3.0, 4.0), 0.0)
        assert tr.lam == 0.75
        assert tr.iterations == 1

    def test_two_channels_against_oracle(self):
        sub = waterfill_sub([4.0, 1.0])
        tr = dinkelbach(sub, start(sub, [4.0]))
        assert tr.lam == pytest.approx(LAM_4_1, rel=1e-12)

    def test_rejects_start_above_optimum(self):
        with pytest.raises(DomainError):
            dinkelbach(waterfill_sub([1.0]), 1.0)

    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(DomainError):
            dinkelbach(waterfill_sub([1.0]), 0.0, tol=0.0)

    def test_max_iter_reported(self):
        sub = waterfill_sub([4.0, 1.0])
        tr = dinkelbach(sub, 1e-3, tol=1e-300, max_iter=2)
        assert tr.status is Status.MAX_ITER
        assert not tr.converged

    @given(channels, mus)
    def test_monotone_iterates(self, g, mu):
        sub = waterfill_sub(g, mu)
        tr = dinkelbach(sub, start(sub, g))
        lams = np.array(tr.lambdas)
        assert np.all(np.diff(lams) >= -1e-15 * lams[1:])
        assert all(F >= -1e-12 for F in tr.F_values[1:])
        assert tr.iterations <= 30

    @given(channels, mus)
    def test_lambda_equals_achieved_ratio(self, g, mu):
        sub = waterfill_sub(g, mu)
        tr = dinkelbach(sub, start(sub, g))
        sol = tr.solution
        assert abs(tr.lam - sol.f1 / sol.f2) <= 1e-8 / sol.f2

    @given(channels, mus)
    def test_ratio_start_is_valid(self, g, mu):
        sub = waterfill_sub(g, mu)
        lam0 = ratio_start(sub, 0.5 * max(g))
        assert sub.F(lam0) >= -1e-12


class TestBisection:
    def test_agrees_with_dinkelbach(self):
        for g in ([1.0], [4.0, 1.0], [2.0, 2.0, 0.3]):
            sub = waterfill_sub(g)
            d = dinkelbach(sub, start(sub, g), tol=1e-12)
            b = bisection_solver(sub, RootBracket.of(sub.F, 1e-6, max(g)))
            assert b.lam == pytest.approx(d.lam, rel=1e-9)

    def test_linear_F(self):
        sub = ParametricSubproblem.constant(2.0, 5.0)
        tr = bisection_solver(sub, RootBracket.of(sub.F, 0.0, 1.0), tol=1e-14)
        assert tr.lam == pytest.approx(0.4, rel=1e-13)

    def test_bracket_without_sign_change(self):
        sub = waterfill_sub([1.0])
        with pytest.raises(BracketError):
            bisection_solver(sub, RootBracket(0.0, 0.1, 1.0, 0.5))


class TestClamp:
    bounds = LambdaBounds(0.1, 0.5)

    @pytest.mark.parametrize("lam,expected", [(0.3, 0.3), (0.05, 0.1), (0.9, 0.5)])
    def test_clamp(self, lam, expected):
        assert clamp_to_bounds(lam, self.bounds) == expected

    def test_inconsistent_bounds(self):
        with pytest.raises(InfeasibleError):
            LambdaBounds(0.6, 0.5)

    def test_constrained_statuses(self):
        sub = waterfill_sub([1.0])
        lam0 = start(sub, [1.0])
        assert solve_constrained(sub, LambdaBounds(0.5, 1.0), lam0).status is Status.CLAMPED_MIN
        assert solve_constrained(sub, LambdaBounds(0.0, 0.2), lam0).status is Status.CLAMPED_MAX
        assert solve_constrained(sub, LambdaBounds(0.2, 0.5), lam0).status is Status.CONVERGED

    def test_zero_start_with_finite_caps(self):
        # F(0) is the full-power sum rate, a valid start once powers are capped
        sub = waterfill_sub([4.0, 1.0], p_max=2.0)
        assert dinkelbach(sub, 0.0).lam == pytest.approx(dinkelbach(sub, start(sub, [4.0])).lam, rel=1e-10)


class TestReciprocal:
    def test_unit_channel(self):
        sub = waterfill_sub([1.0])
        assert minimize_reciprocal(sub, lam0=start(sub, [1.0])) == pytest.approx(math.e, rel=1e-10)

    def test_constant(self):
        assert minimize_reciprocal(ParametricSubproblem.constant(3.0, 4.0)) == pytest.approx(4.0 / 3.0)

    def test_reciprocal_of_dinkelbach(self):
        sub = waterfill_sub([4.0, 1.0])
        lam0 = start(sub, [4.0])
        assert minimize_reciprocal(sub, lam0=lam0) * dinkelbach(sub, lam0).lam == pytest.approx(1.0, abs=1e-9)

    def test_zero_numerator(self):
        with pytest.raises(ZeroDivisionError):
            minimize_reciprocal(ParametricSubproblem.constant(0.0, 1.0))


class TestKKT:
    def test_optimum_passes(self):
        sub = waterfill_sub([4.0, 1.0, 0.2])
        rep = verify_kkt(sub, dinkelbach(sub, start(sub, [4.0])).lam)
        assert rep.ok

    def test_perturbed_lambda_fails_root(self):
        sub = waterfill_sub([4.0, 1.0])
        lam = dinkelbach(sub, start(sub, [4.0])).lam
        rep = verify_kkt(sub, lam + 0.1)
        assert rep.stationarity_ok and rep.slackness_ok
        assert not rep.root_ok
        assert rep.root == pytest.approx(abs(sub.F(lam + 0.1)), rel=1e-12)

    def test_idle_allocation_uses_boundary_multipliers(self):
        sub = waterfill_sub([4.0, 1.0])
        rep = verify_kkt(sub, 5.0)
        assert rep.stationarity_ok and rep.slackness_ok

    def test_clipped_channel(self):
        sub = waterfill_sub([10.0], p_max=0.5)
        rep = verify_kkt(sub, dinkelbach(sub, 0.0).lam)
        assert rep.ok

    def test_needs_gradients(self):
        sub = ParametricSubproblem(lambda lam: SubproblemSolution(lam, np.zeros(1), 1.0, 1.0))
        with pytest.raises(DomainError):
            verify_kkt(sub, 0.5)


class TestFProperties:
    @given(channels, mus, st.floats(0.001, 0.99), st.floats(0.001, 0.99))
    def test_strictly_decreasing_and_convex(self, g, mu, a, b):
        sub = waterfill_sub(g, mu)
        top = max(g)
        l1, l2 = sorted((a * top, b * top))
        F1, F2 = sub.F(l1), sub.F(l2)
        if l2 - l1 > 1e-9 * l2:
            assert F1 > F2
        assert sub.F(0.5 * (l1 + l2)) <= 0.5 * (F1 + F2) + 1e-9

    @given(channels, mus)
    def test_sign_equivalence(self, g, mu):
        sub = waterfill_sub(g, mu)
        lam = dinkelbach(sub, start(sub, g), tol=1e-12).lam
        eps = 1e-6 * lam
        assert sub.F(lam - eps) > 0 > sub.F(lam + eps)
