"""EE maximization as a one-dimensional search over the inverse total power.

Writing ``t = 1/(mu + P)`` turns the ratio problem into

    maximize  g(t) = t * R(1/t - mu)   over  0 < t <= 1/mu,

where ``R(P)`` is the largest sum rate reachable with sum power ``P``. Any
rate-maximization solver can play the role of ``R``; the optimal EE
allocation is then the rate-maximizing one for the budget ``1/t* - mu``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DomainError, TableRangeError
from .mmse import _per_channel, mercury_allocate, mmse_inverse
from .numerics import RootBracket, find_root
from .waterfill import Allocation, ParallelChannel, lambda_min_from_power, waterfill_allocate

__all__ = [
    "RateMaxResult",
    "WaterfillOracle",
    "MercuryOracle",
    "NestedResult",
    "rate_max_waterfill",
    "rate_max_mercury",
    "golden_section_max",
    "solve_nested",
]

log = logging.getLogger(__name__)

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class RateMaxResult:
    """Rate-maximizing allocation for one power budget.

    ``level`` is the cutoff at which the allocation is a water-filling (or
    mercury/water-filling) solution: ``lam`` for Gaussian inputs, ``eta``
    for discrete ones.
    """

    allocation: Allocation
    rate: float
    level: float
    root_evaluations: int = 0


def rate_max_waterfill(channel: ParallelChannel, P: float) -> RateMaxResult:
    """Maximize the sum rate of Gaussian inputs with ``sum(p) <= P``.

    >>> res = rate_max_waterfill(ParallelChannel([1.0]), 1.0)
    >>> round(res.rate, 12) == round(math.log(2), 12)
    True
    """
    if not P >= 0:
        raise DomainError(f"power budget must be nonnegative, got {P!r}")
    if P == 0 or not np.any(channel.active):
        alloc = Allocation(np.zeros(channel.K), np.zeros(channel.K), cutoff=math.inf)
        return RateMaxResult(alloc, 0.0, math.inf)
    lam = lambda_min_from_power(channel, P)
    alloc = waterfill_allocate(channel, lam)
    return RateMaxResult(alloc, alloc.sum_rate, lam)


def _mercury_power(tabs, g, eta: float) -> float:
    total = 0.0
    for tab, gi in zip(tabs, g):
        if gi > 0 and eta < gi and not tab.degenerate:
            total += mmse_inverse(tab, eta / gi) / gi
    return total


def _mercury_eta_floor(tabs, g) -> float:
    """Smallest cutoff whose normalized levels stay inside every table."""
    lo = 0.0
    for tab, gi in zip(tabs, g):
        if gi > 0 and not tab.degenerate:
            lo = max(lo, tab.floor * gi)
    return lo


def rate_max_mercury(tables, cnrs, P: float) -> RateMaxResult:
    """Maximize the sum rate of discrete inputs with ``sum(p) = P``.

    The cutoff ``eta`` solves ``sum_i MMSE_i^-1(min(1, eta/gamma_i))/gamma_i = P``
    and the powers follow from mercury/water-filling at ``eta``.

    Raises
    ------
    TableRangeError
        If ``P`` needs SNRs beyond the tabulated range.
    """
    if not P >= 0:
        raise DomainError(f"power budget must be nonnegative, got {P!r}")
    g = np.asarray(cnrs, dtype=float).ravel()
    tabs = _per_channel(tables, g.size)
    usable = [gi > 0 and not t.degenerate for t, gi in zip(tabs, g)]
    if P == 0 or not any(usable):
        alloc = mercury_allocate(tabs, g, math.inf)
        return RateMaxResult(alloc, 0.0, math.inf)

    hi = float(max(gi for gi, u in zip(g, usable) if u))
    lo = _mercury_eta_floor(tabs, g)
    if _mercury_power(tabs, g, lo) < P:
        raise TableRangeError(
            f"power budget {P:.6g} exceeds what the tables cover "
            f"({_mercury_power(tabs, g, lo):.6g}); rebuild with a larger rho_max"
        )
    calls = [0]

    def excess(eta):
        calls[0] += 1
        return _mercury_power(tabs, g, eta) - P

    if excess(lo) == 0:
        eta = lo
    else:
        eta = find_root(excess, RootBracket(lo, hi, excess(lo), excess(hi)), tol=1e-300)
    alloc = mercury_allocate(tabs, g, eta)
    return RateMaxResult(alloc, alloc.sum_rate, eta, calls[0])


@dataclass(frozen=True)
class WaterfillOracle:
    """Rate maximization with Gaussian inputs on a fixed channel."""

    channel: ParallelChannel

    @property
    def max_power(self) -> float:
        """Budget beyond which the rate no longer grows."""
        return self.channel.full_power

    def __call__(self, P: float) -> RateMaxResult:
        return rate_max_waterfill(self.channel, P)


@dataclass(frozen=True)
class MercuryOracle:
    """Rate maximization with tabulated discrete inputs."""

    tables: object
    cnrs: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.cnrs, dtype=float).ravel()
        object.__setattr__(self, "cnrs", g)
        object.__setattr__(self, "tables", _per_channel(self.tables, g.size))

    @property
    def max_power(self) -> float:
        """Largest budget inside the tabulated SNR range."""
        return _mercury_power(self.tables, self.cnrs, _mercury_eta_floor(self.tables, self.cnrs))

    def __call__(self, P: float) -> RateMaxResult:
        return rate_max_mercury(self.tables, self.cnrs, P)


def golden_section_max(
    g: Callable[[float], float], lo: float, hi: float, tol: float, max_iter: int = 500
) -> tuple[float, float, int]:
    """Maximize a unimodal function on ``[lo, hi]`` by golden-section search.

    Returns ``(x, g(x), evaluations)``; stops when the bracket is narrower
    than ``tol * (1 + |x|)``.
    """
    if not lo < hi:
        raise DomainError("golden-section search needs lo < hi")
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    gc, gd = g(c), g(d)
    n = 2
    while b - a > tol * (1.0 + abs(0.5 * (a + b))) and n < max_iter:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _INV_PHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INV_PHI * (b - a)
            gd = g(d)
        n += 1
    x, gx = (c, gc) if gc >= gd else (d, gd)
    # the endpoints are not probed by the loop
    for e in (lo, hi):
        ge = g(e)
        n += 1
        if ge > gx:
            x, gx = e, ge
    return x, gx, n


@dataclass
class NestedResult:
    """Outcome of :func:`solve_nested`.

    Attributes
    ----------
    t : float
        Optimal ``1/(mu + P)``.
    ee : float
        ``g(t)``, the maximal EE.
    power : float
        Optimal sum-power budget ``1/t - mu``.
    inner : RateMaxResult
        Rate-maximizing allocation at that budget.
    evaluations : int
        Oracle calls made by the outer search.
    root_evaluations : int
        Inner root-finder function evaluations summed over all oracle calls.
    """

    t: float
    ee: float
    power: float
    inner: RateMaxResult
    evaluations: int
    root_evaluations: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def allocation(self) -> Allocation:
        return self.inner.allocation


def solve_nested(oracle, mu: float, tol: float = 1e-10) -> NestedResult:
    """Maximize ``t * R(1/t - mu)`` over ``t`` with an inner rate oracle.

    Parameters
    ----------
    oracle : callable
        ``P -> RateMaxResult``; if it has a ``max_power`` attribute the
        search never asks for more than that.
    mu : float
        Circuit power per Hz, ``mu > 0``.
    tol : float
        Relative width of the final bracket in ``log t``.

    Returns
    -------
    NestedResult
    """
    if not mu > 0:
        raise DomainError("mu must be positive")
    t_hi = (1.0 - 1e-12) / mu
    p_cap = getattr(oracle, "max_power", math.inf)
    t_lo = 1e-12 / mu if not math.isfinite(p_cap) else 1.0 / (mu + p_cap)
    t_lo = min(t_lo, 0.5 * t_hi)

    history = []
    roots = [0]

    # unimodal in t, hence in log t; the log scale gives relative accuracy
    def objective(s):
        t = math.exp(s)
        P = max(1.0 / t - mu, 0.0)
        res = oracle(min(P, p_cap))
        roots[0] += res.root_evaluations
        val = t * res.rate
        history.append((t, val))
        return val

    s, _, n = golden_section_max(objective, math.log(t_lo), math.log(t_hi), tol)
    t = math.exp(s)
    P = min(max(1.0 / t - mu, 0.0), p_cap)
    inner = oracle(P)
    ee = t * inner.rate
    log.debug("nested search: %d oracle calls, %d inner root evaluations", n + 1, roots[0])
    return NestedResult(t, ee, P, inner, n + 1, roots[0] + inner.root_evaluations, history)
