"""Special functions and root-finding primitives shared by the solvers.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize
from scipy import special as _special

from .exceptions import BracketError, DomainError, NumericalError, QuadratureError

__all__ = [
    "QuadratureSpec",
    "RootBracket",
    "lambert_w0",
    "exp_int",
    "integrate",
    "find_root",
    "bracket_decreasing",
]

_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy targets for :func:`integrate`."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


@dataclass(frozen=True)
class RootBracket:
    """An interval ``[lo, hi]`` on which a function changes sign."""

    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise BracketError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")
        if np.isnan(self.f_lo) or np.isnan(self.f_hi):
            raise BracketError("function is NaN at a bracket endpoint")
        if np.sign(self.f_lo) == np.sign(self.f_hi):
            raise BracketError(
                f"no sign change on [{self.lo}, {self.hi}]: "
                f"f(lo)={self.f_lo:.6g}, f(hi)={self.f_hi:.6g}"
            )

    @classmethod
    def of(cls, f: Callable[[float], float], lo: float, hi: float) -> "RootBracket":
        """Evaluate ``f`` at both ends and build the bracket."""
        return cls(lo, hi, float(f(lo)), float(f(hi)))


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function.

    Solves ``w * exp(w) = x`` for ``w >= -1`` by Halley iteration.

    Parameters
    ----------
    x : float
        Argument, ``x >= -1/e``.

    Returns
    -------
    float
        ``W0(x)``.

    Raises
    ------
    DomainError
        If ``x < -1/e`` (beyond a few ulps of rounding slack) or ``x`` is NaN.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("lambert_w0 of NaN")
    if x < -_INV_E:
        if x < -_INV_E * (1.0 + 4 * np.finfo(float).eps):
            raise DomainError(f"lambert_w0 requires x >= -1/e, got {x!r}")
        return -1.0
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    # initial guess
    if x < -0.25:
        # branch-point series in p = sqrt(2(ex + 1))
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif x <= math.e:
        w = math.log1p(x)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w -= step
        if abs(step) <= 4 * np.finfo(float).eps * (1.0 + abs(w)):
            break
    return max(w, -1.0)


def exp_int(n: int, x):
    """Generalized exponential integral ``E_n(x) = int_1^inf t^-n e^(-xt) dt``.

    ``E_0`` is returned in closed form as ``exp(-x)/x``; ``n >= 1`` is
    delegated to :func:`scipy.special.expn`. Accepts scalars or arrays.
    """
    if int(n) != n or n < 0:
        raise DomainError(f"exp_int order must be a nonnegative integer, got {n!r}")
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)) or np.any(xa <= 0):
        raise DomainError("exp_int requires x > 0")
    if n == 0:
        out = np.exp(-xa) / xa
    elif n == 1:
        out = _special.exp1(xa)
    else:
        out = _special.expn(int(n), xa)
    return float(out) if out.ndim == 0 else out


def integrate(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    spec: QuadratureSpec | None = None,
    breakpoints=None,
) -> float:
    """Adaptive quadrature of a scalar function on ``[lo, hi]``.

    ``hi`` may be ``+inf``; the integrand must then decay. Backed by
    QUADPACK through :func:`scipy.integrate.quad`, whose infinite-range
    rule maps ``[lo, inf)`` onto ``(0, 1]``. ``breakpoints`` lists interior
    kinks of the integrand (finite ranges only).

    Raises
    ------
    QuadratureError
        When the subdivision budget is exhausted or QUADPACK reports
        roundoff trouble. The exception carries the best estimate and the
        achieved error bound.
    """
    spec = spec or QuadratureSpec()
    if hi == lo:
        return 0.0
    if hi < lo:
        return -integrate(f, hi, lo, spec, breakpoints)
    extra = {}
    limit = spec.max_subdivisions
    if breakpoints is not None and math.isfinite(hi):
        pts = np.asarray(breakpoints, dtype=float)
        pts = pts[(pts > lo) & (pts < hi)]
        if pts.size:
            extra["points"] = pts
            limit = max(limit, 2 * pts.size + 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        res = _integrate.quad(
            f,
            lo,
            hi,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=limit,
            full_output=1,
            **extra,
        )
    value, err = res[0], res[1]
    if len(res) > 3:
        # ier > 0
        if not (err <= max(spec.abs_tol, spec.rel_tol * abs(value)) * 10):
            raise QuadratureError(
                f"quadrature on [{lo}, {hi}] did not converge: {res[3]}",
                estimate=value,
                error_bound=err,
            )
    if not np.isfinite(value):
        raise QuadratureError(f"non-finite integral on [{lo}, {hi}]", value, err)
    return float(value)


def find_root(
    f: Callable[[float], float],
    bracket: RootBracket,
    tol: float = 1e-12,
    rtol: float = 4 * np.finfo(float).eps,
    maxiter: int = 200,
) -> float:
    """Root of ``f`` inside a sign-change bracket.

    Brent's hybrid of bisection, secant and inverse quadratic steps; the
    bracket shrinks monotonically and convergence is guaranteed.
    Terminates when the bracket is narrower than ``tol + rtol*|x|``.
    """
    if bracket.f_lo == 0:
        return float(bracket.lo)
    if bracket.f_hi == 0:
        return float(bracket.hi)
    try:
        x, info = _optimize.brentq(
            f, bracket.lo, bracket.hi, xtol=tol, rtol=rtol, maxiter=maxiter,
            full_output=True, disp=False,
        )
    except ValueError as exc:
        raise BracketError(str(exc)) from exc
    if not info.converged:
        raise NumericalError(f"root finder did not converge: {info.flag}")
    return float(x)


def bracket_decreasing(
    f: Callable[[float], float],
    x0: float,
    factor: float = 2.0,
    max_steps: int = 400,
) -> RootBracket:
    """Bracket the root of a decreasing function on ``(0, inf)``.

    Starting at ``x0 > 0`` the interval is grown geometrically until
    ``f(lo) > 0 >= f(hi)``.
    """
    if not x0 > 0:
        raise DomainError("bracket_decreasing needs a positive start")
    lo = hi = float(x0)
    f_lo = f_hi = float(f(x0))
    steps = 0
    while f_lo <= 0:
        hi, f_hi = lo, f_lo
        lo /= factor
        f_lo = float(f(lo))
        steps += 1
        if steps > max_steps:
            raise BracketError("could not find a point with f > 0")
    while f_hi > 0:
        lo, f_lo = hi, f_hi
        hi *= factor
        f_hi = float(f(hi))
        steps += 1
        if steps > max_steps:
            raise BracketError("could not find a point with f <= 0")
    return RootBracket(lo, hi, f_lo, f_hi)
