"""Concave-convex fractional programming.

Maximizes ``f1(x) / f2(x)`` over a convex set through the parametric
function

    F(lam) = max_x  f1(x) - lam * f2(x),

which is convex, continuous and strictly decreasing in ``lam``; the
optimal ratio is its unique root. Two root drivers are provided: the
Dinkelbach (Newton) iteration and plain bisection, the latter serving as an
independent cross-check.

A subproblem is anything that maps ``lam`` to a :class:`SubproblemSolution`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import BracketError, DomainError, InfeasibleError, NumericalError
from .numerics import RootBracket

__all__ = [
    "Status",
    "SubproblemSolution",
    "ParametricSubproblem",
    "LambdaBounds",
    "DinkelbachTrace",
    "KKTReport",
    "ratio_start",
    "dinkelbach",
    "bisection_solver",
    "clamp_to_bounds",
    "solve_constrained",
    "minimize_reciprocal",
    "verify_kkt",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100


class Status(str, enum.Enum):
    CONVERGED = "converged"
    CLAMPED_MIN = "clamped-min"
    CLAMPED_MAX = "clamped-max"
    MAX_ITER = "max-iter"
    INFEASIBLE = "infeasible"

    def __str__(self):
        return self.value


@dataclass
class SubproblemSolution:
    """Maximizer of ``f1 - lam*f2`` at one value of ``lam``.

    The gradient and box fields are optional; :func:`verify_kkt` needs them.
    """

    lam: float
    x: np.ndarray
    f1: float
    f2: float
    grad_f1: np.ndarray | None = None
    grad_f2: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def F(self) -> float:
        return self.f1 - self.lam * self.f2

    @property
    def ratio(self) -> float:
        return self.f1 / self.f2


@dataclass(frozen=True)
class ParametricSubproblem:
    """Wraps a callable ``lam -> SubproblemSolution``."""

    solve: Callable[[float], SubproblemSolution]
    name: str = "subproblem"

    def __call__(self, lam: float) -> SubproblemSolution:
        return self.solve(float(lam))

    def F(self, lam: float) -> float:
        return self.solve(float(lam)).F

    @classmethod
    def constant(cls, f1: float, f2: float) -> "ParametricSubproblem":
        """Subproblem whose numerator and denominator do not depend on x."""
        if f2 <= 0:
            raise DomainError("denominator must be positive")

        def solve(lam):
            return SubproblemSolution(
                lam, np.zeros(1), float(f1), float(f2),
                grad_f1=np.zeros(1), grad_f2=np.zeros(1),
                lower=np.zeros(1), upper=np.zeros(1),
            )

        return cls(solve, name="constant")


@dataclass(frozen=True)
class LambdaBounds:
    """Admissible interval for ``lam`` implied by box constraints on f1/f2.

    An upper bound on power gives ``lam_min``; a lower bound on rate gives
    ``lam_max``.
    """

    lam_min: float = 0.0
    lam_max: float = math.inf

    def __post_init__(self):
        if self.lam_min < 0 or math.isnan(self.lam_min) or math.isnan(self.lam_max):
            raise DomainError("lam_min must be a nonnegative number")
        if self.lam_min > self.lam_max:
            raise InfeasibleError(
                f"constraints are incompatible: lam_min={self.lam_min:.6g} "
                f"> lam_max={self.lam_max:.6g}"
            )

    @property
    def active(self) -> bool:
        return self.lam_min > 0 or math.isfinite(self.lam_max)


@dataclass
class DinkelbachTrace:
    """Iterate history and outcome of a root search on ``F``."""

    lambdas: list[float]
    F_values: list[float]
    lam: float
    solution: SubproblemSolution
    iterations: int
    status: Status
    method: str = "dinkelbach"

    @property
    def x(self) -> np.ndarray:
        return self.solution.x

    @property
    def ee(self) -> float:
        """Achieved ratio ``f1/f2`` of the returned allocation."""
        return self.solution.ratio

    @property
    def converged(self) -> bool:
        return self.status is not Status.MAX_ITER


def ratio_start(sub: ParametricSubproblem, lam_hint: float) -> float:
    """A starting point with ``F >= 0``.

    The ratio of any feasible point never exceeds the optimum, so the ratio
    of the subproblem solution at ``lam_hint`` is a valid Dinkelbach start.
    """
    sol = sub(lam_hint)
    if sol.f2 <= 0:
        raise NumericalError("subproblem returned a nonpositive denominator")
    return max(sol.ratio, 0.0)


def dinkelbach(
    sub: ParametricSubproblem,
    lam0: float = 0.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DinkelbachTrace:
    """Dinkelbach's method.

    Iterates ``lam <- f1(x*)/f2(x*)`` until ``|F(lam)| < tol``, then takes
    one final update so the reported parameter is the achieved ratio. This is
    Newton's method on ``F`` since ``F'(lam) = -f2(x*)``, so the iterates
    increase monotonically and converge superlinearly.

    Parameters
    ----------
    sub : ParametricSubproblem
        Inner maximizer.
    lam0 : float
        Starting parameter with ``F(lam0) >= 0``.
    tol : float
        Stopping tolerance on ``|F|``.
    max_iter : int
        Update budget. Exhausting it returns a trace with status
        ``max-iter`` rather than raising.

    Raises
    ------
    DomainError
        If ``F(lam0)`` is negative (by more than ``tol``) or ``tol <= 0``.
    """
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    sol = sub(lam0)
    if sol.F < 0 and abs(sol.F) >= tol:
        raise DomainError(
            f"initial lam0={lam0:.6g} has F(lam0)={sol.F:.6g} < 0; "
            "start below the optimal ratio"
        )
    lambdas, Fs = [], []
    n = 0
    while True:
        lambdas.append(sol.lam)
        Fs.append(sol.F)
        if abs(sol.F) < tol:
            status = Status.CONVERGED
            if sol.F > 0 and sol.f2 > 0:
                # one more update: the stopping parameter lags the achieved
                # ratio by about F/f2, which is large when f2 is small
                sol = sub(sol.ratio)
                n += 1
                lambdas.append(sol.lam)
                Fs.append(sol.F)
            break
        if n >= max_iter:
            status = Status.MAX_ITER
            break
        if not sol.f2 > 0:
            raise NumericalError("subproblem returned a nonpositive denominator")
        sol = sub(sol.ratio)
        n += 1
    return DinkelbachTrace(lambdas, Fs, sol.lam, sol, n, status, "dinkelbach")


def bisection_solver(
    sub: ParametricSubproblem,
    bracket: RootBracket,
    tol: float = 1e-13,
    max_iter: int = 400,
) -> DinkelbachTrace:
    """Root of ``F`` by bisection on a sign-change bracket.

    Stops when the bracket width drops below ``tol * hi``. Slower
    than :func:`dinkelbach` but shares nothing with it beyond the
    subproblem, which makes it a useful oracle.
    """
    if not (bracket.f_lo > 0 >= bracket.f_hi):
        raise BracketError("bisection needs F(lo) > 0 >= F(hi)")
    lo, hi = float(bracket.lo), float(bracket.hi)
    lambdas, Fs = [], []
    n = 0
    while hi - lo > tol * hi and n < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = sub.F(mid)
        lambdas.append(mid)
        Fs.append(f_mid)
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
        n += 1
    lam = 0.5 * (lo + hi)
    sol = sub(lam)
    lambdas.append(lam)
    Fs.append(sol.F)
    status = Status.CONVERGED if n < max_iter else Status.MAX_ITER
    return DinkelbachTrace(lambdas, Fs, lam, sol, n, status, "bisection")


def clamp_to_bounds(lam: float, bounds: LambdaBounds) -> float:
    """Project ``lam`` onto ``[lam_min, lam_max]``."""
    if bounds.lam_min > bounds.lam_max:
        raise InfeasibleError("lam_min exceeds lam_max")
    return min(max(lam, bounds.lam_min), bounds.lam_max)


def solve_constrained(
    sub: ParametricSubproblem,
    bounds: LambdaBounds,
    lam0: float = 0.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DinkelbachTrace:
    """Unconstrained Dinkelbach solve followed by clamping onto ``bounds``.

    When the unconstrained optimum lies outside the bounds the subproblem is
    re-solved at the violated endpoint and the status records which one.
    """
    trace = dinkelbach(sub, lam0, tol, max_iter)
    lam = clamp_to_bounds(trace.lam, bounds)
    if lam == trace.lam:
        return trace
    sol = sub(lam)
    trace.lambdas.append(lam)
    trace.F_values.append(sol.F)
    trace.lam = lam
    trace.solution = sol
    trace.status = Status.CLAMPED_MIN if lam == bounds.lam_min else Status.CLAMPED_MAX
    return trace


def minimize_reciprocal(
    sub: ParametricSubproblem,
    tol: float = DEFAULT_TOL,
    lam0: float = 0.0,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Minimum of ``f2/f1`` (energy per unit information).

    Obtained from the maximizer of ``f1/f2`` rather than by a second solve.
    """
    trace = dinkelbach(sub, lam0, tol, max_iter)
    f1 = trace.solution.f1
    if not f1 > 0:
        raise ZeroDivisionError("numerator vanishes at the optimum; f2/f1 is unbounded")
    return trace.solution.f2 / f1


@dataclass
class KKTReport:
    """Residuals of the optimality conditions at one ``lam``."""

    lam: float
    stationarity: float
    slackness: float
    root: float
    tol: float

    @property
    def stationarity_ok(self) -> bool:
        return self.stationarity <= self.tol

    @property
    def slackness_ok(self) -> bool:
        return self.slackness <= self.tol

    @property
    def root_ok(self) -> bool:
        return self.root <= self.tol

    @property
    def ok(self) -> bool:
        return self.stationarity_ok and self.slackness_ok and self.root_ok


def verify_kkt(sub: ParametricSubproblem, lam: float, tol: float = 1e-8) -> KKTReport:
    """Check the optimality conditions of the ratio problem at ``lam``.

    Three residuals are reported:

    * stationarity of ``f1 - lam*f2`` with multipliers allowed only on
      active box constraints,
    * complementary slackness of the nonnegative multipliers that would
      cancel the gradient,
    * the root condition ``|F(lam)|``.
    """
    sol = sub(lam)
    if sol.grad_f1 is None or sol.grad_f2 is None:
        raise DomainError("subproblem does not expose gradient information")
    x = np.asarray(sol.x, dtype=float)
    g = np.asarray(sol.grad_f1, dtype=float) - lam * np.asarray(sol.grad_f2, dtype=float)
    lower = np.full_like(x, -np.inf) if sol.lower is None else np.asarray(sol.lower, float)
    upper = np.full_like(x, np.inf) if sol.upper is None else np.asarray(sol.upper, float)

    slack_lo = x - lower
    slack_hi = upper - x
    at_lo = slack_lo <= 1e-12 * (1.0 + np.abs(lower))
    at_hi = slack_hi <= 1e-12 * (1.0 + np.abs(np.where(np.isfinite(upper), upper, 0.0)))

    u_lo = np.where(at_lo, np.maximum(-g, 0.0), 0.0)
    u_hi = np.where(at_hi, np.maximum(g, 0.0), 0.0)
    stationarity = np.abs(g + u_lo - u_hi)

    # slack capped at one so unbounded boxes give a finite residual
    w_lo = np.maximum(-g, 0.0)
    w_hi = np.maximum(g, 0.0)
    cs_lo = w_lo * np.where(at_lo, 0.0, np.minimum(slack_lo, 1.0))
    cs_hi = w_hi * np.where(at_hi, 0.0, np.minimum(slack_hi, 1.0))
    slackness = np.maximum(cs_lo, cs_hi)

    return KKTReport(
        lam=float(lam),
        stationarity=float(stationarity.max(initial=0.0)),
        slackness=float(slackness.max(initial=0.0)),
        root=abs(sol.F),
        tol=tol,
    )
