"""Energy-efficient power allocation on time-invariant parallel channels.

All quantities are per unit bandwidth: powers are PSDs in W/Hz, CNRs are
in 1/(W/Hz), rates are in nat/s/Hz. For a fixed cutoff ``lam`` the inner
problem is solved by water-filling with water level ``1/lam``::

    p_i = clip(1/lam - 1/gamma_i, 0, p_max)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, InfeasibleError
from .fracprog import (
    DEFAULT_TOL,
    DinkelbachTrace,
    LambdaBounds,
    ParametricSubproblem,
    Status,
    SubproblemSolution,
    bisection_solver,
    clamp_to_bounds,
    ratio_start,
    solve_constrained,
)
from .numerics import RootBracket, find_root, lambert_w0

__all__ = [
    "ParallelChannel",
    "StaticEEProblem",
    "Allocation",
    "waterfill_powers",
    "waterfill_allocate",
    "eval_F",
    "static_subproblem",
    "lambda_min_from_power",
    "lambda_max_from_rate",
    "lambda_bounds",
    "solve_static",
    "flat_fading_closed_form",
    "apply_gap",
    "tradeoff_curve",
]


@dataclass(frozen=True)
class ParallelChannel:
    """K parallel subchannels with a common per-subchannel PSD cap."""

    cnrs: np.ndarray
    p_max: float = math.inf

    def __post_init__(self):
        cnrs = np.atleast_1d(np.asarray(self.cnrs, dtype=float)).copy()
        if cnrs.ndim != 1 or cnrs.size < 1:
            raise DomainError("cnrs must be a nonempty vector")
        if np.any(~np.isfinite(cnrs)) or np.any(cnrs < 0):
            raise DomainError("cnrs must be finite and nonnegative")
        if not self.p_max > 0:
            raise DomainError("p_max must be positive")
        cnrs.setflags(write=False)
        object.__setattr__(self, "cnrs", cnrs)
        object.__setattr__(self, "p_max", float(self.p_max))

    @property
    def K(self) -> int:
        return self.cnrs.size

    @property
    def active(self) -> np.ndarray:
        return self.cnrs > 0

    @property
    def full_power(self) -> float:
        """Sum power with every usable subchannel at its cap."""
        return self.p_max * int(self.active.sum())

    @property
    def full_rate(self) -> float:
        return float(np.sum(np.log1p(self.cnrs * self.p_max)))

    @property
    def saturation_cutoff(self) -> float:
        """Largest cutoff at which every usable subchannel is clipped."""
        g = self.cnrs[self.active]
        if g.size == 0:
            return 0.0
        return float(np.min(g / (1.0 + g * self.p_max)))


@dataclass(frozen=True)
class StaticEEProblem:
    """Maximize ``sum(r) / (mu + sum(p))`` on a :class:`ParallelChannel`.

    ``sum_power`` caps the total PSD, ``min_rate`` is a floor on the sum
    rate in nats.
    """

    channel: ParallelChannel
    mu: float
    sum_power: float | None = None
    min_rate: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError("mu must be positive")
        if self.sum_power is not None and not self.sum_power > 0:
            raise DomainError("sum_power must be positive")
        if self.min_rate is not None and not self.min_rate >= 0:
            raise DomainError("min_rate must be nonnegative")


@dataclass
class Allocation:
    """Per-subchannel powers and rates, plus the EE they achieve for ``mu``."""

    powers: np.ndarray
    rates: np.ndarray
    mu: float = math.nan
    cutoff: float = math.nan
    gaps: np.ndarray | None = field(default=None, repr=False)

    @property
    def sum_power(self) -> float:
        return float(np.sum(self.powers))

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))

    @property
    def ee(self) -> float:
        return self.sum_rate / (self.mu + self.sum_power)


def waterfill_powers(cnrs: np.ndarray, lam: float, p_max: float = math.inf) -> np.ndarray:
    """Vectorized clipped water-filling; ``lam = 0`` means full power."""
    cnrs = np.asarray(cnrs, dtype=float)
    p = np.zeros_like(cnrs)
    on = cnrs > lam
    if lam == 0:
        p[on] = p_max
    else:
        p[on] = np.minimum(1.0 / lam - 1.0 / cnrs[on], p_max)
    return p


def waterfill_allocate(
    channel: ParallelChannel, lam: float, mu: float | None = None
) -> Allocation:
    """Water-filling allocation for cutoff CNR ``lam``.

    Subchannels with ``gamma_i <= lam`` stay silent.

    >>> waterfill_allocate(ParallelChannel([4.0, 1.0]), 2.0).powers
    array([0.25, 0.  ])
    """
    if not lam > 0:
        raise DomainError(f"cutoff must be positive, got {lam!r}")
    p = waterfill_powers(channel.cnrs, lam, channel.p_max)
    r = np.log1p(channel.cnrs * p)
    return Allocation(p, r, math.nan if mu is None else float(mu), float(lam))


def eval_F(problem: StaticEEProblem, lam: float) -> tuple[float, Allocation]:
    """``F(lam) = sum(r) - lam*(mu + sum(p))`` at the water-filling solution."""
    alloc = waterfill_allocate(problem.channel, lam, problem.mu)
    return alloc.sum_rate - lam * (problem.mu + alloc.sum_power), alloc


def static_subproblem(problem: StaticEEProblem) -> ParametricSubproblem:
    ch, mu = problem.channel, problem.mu
    lower = np.zeros(ch.K)
    upper = np.full(ch.K, ch.p_max)
    ones = np.ones(ch.K)

    def solve(lam):
        if lam < 0:
            raise DomainError("cutoff must be nonnegative")
        p = waterfill_powers(ch.cnrs, lam, ch.p_max)
        r = np.log1p(ch.cnrs * p)
        return SubproblemSolution(
            lam, p, float(r.sum()), mu + float(p.sum()),
            grad_f1=ch.cnrs / (1.0 + ch.cnrs * p), grad_f2=ones,
            lower=lower, upper=upper,
        )

    return ParametricSubproblem(solve, name="waterfill")


def _level_power(channel: ParallelChannel, level: float) -> float:
    g = channel.cnrs[channel.active]
    return float(np.sum(np.clip(level - 1.0 / g, 0.0, channel.p_max)))


def _level_rate(channel: ParallelChannel, level: float) -> float:
    g = channel.cnrs[channel.active]
    return float(np.sum(np.log1p(g * np.clip(level - 1.0 / g, 0.0, channel.p_max))))


def lambda_min_from_power(channel: ParallelChannel, P: float) -> float:
    """Cutoff at which water-filling spends exactly ``P`` in total.

    If ``P`` is at least the all-clipped total, the cutoff at which every
    subchannel saturates is returned instead.
    """
    if not P > 0:
        raise DomainError("sum power must be positive")
    g = channel.cnrs[channel.active]
    if g.size == 0:
        return 0.0
    if P >= channel.full_power:
        return channel.saturation_cutoff
    inv = 1.0 / g
    lo = float(inv.min())
    # unclipped, the root sits at or below max(1/g) + P; doubling keeps it strictly inside
    hi = float(np.max(inv + channel.p_max)) if math.isfinite(channel.p_max) else 2.0 * float(inv.max() + P)
    f = lambda u: _level_power(channel, u) - P  # noqa: E731
    if f(hi) <= 0:
        # P within rounding of the all-clipped total
        return channel.saturation_cutoff
    level = find_root(f, RootBracket.of(f, lo, hi), tol=1e-300)
    return 1.0 / level


def lambda_max_from_rate(channel: ParallelChannel, R0: float) -> float:
    """Cutoff at which water-filling achieves sum rate ``R0`` (nats).

    ``R0 = 0`` makes the constraint vacuous and returns ``inf``.

    Raises
    ------
    InfeasibleError
        If ``R0`` exceeds the rate reachable with every subchannel at
        ``p_max``.
    """
    if not R0 >= 0:
        raise DomainError("rate floor must be nonnegative")
    if R0 == 0:
        return math.inf
    g = channel.cnrs[channel.active]
    if g.size == 0 or R0 > channel.full_rate:
        raise InfeasibleError(
            f"rate floor {R0:.6g} nats exceeds the full-power sum rate {channel.full_rate:.6g}"
        )
    if R0 == channel.full_rate:
        return channel.saturation_cutoff
    inv = 1.0 / g
    lo = float(inv.min())
    if math.isfinite(channel.p_max):
        hi = float(np.max(inv + channel.p_max))
    else:
        hi = 2.0 * math.exp(R0) / float(g.max())
    f = lambda u: _level_rate(channel, u) - R0  # noqa: E731
    if f(hi) <= 0:
        return channel.saturation_cutoff
    level = find_root(f, RootBracket.of(f, lo, hi), tol=1e-300)
    return 1.0 / level


def lambda_bounds(problem: StaticEEProblem) -> LambdaBounds:
    """Map the sum-power cap and rate floor of ``problem`` to cutoff bounds."""
    lam_min = 0.0
    lam_max = math.inf
    if problem.sum_power is not None:
        lam_min = lambda_min_from_power(problem.channel, problem.sum_power)
    if problem.min_rate is not None:
        lam_max = lambda_max_from_rate(problem.channel, problem.min_rate)
    return LambdaBounds(lam_min, lam_max)


def solve_static(
    problem: StaticEEProblem,
    tol: float = DEFAULT_TOL,
    method: str = "dinkelbach",
    max_iter: int = 100,
) -> DinkelbachTrace:
    """Maximize EE on a static parallel channel.

    Parameters
    ----------
    problem : StaticEEProblem
    tol : float
        Tolerance on ``|F|`` for Dinkelbach, or relative bracket width for
        bisection.
    method : {"dinkelbach", "bisection"}

    Returns
    -------
    DinkelbachTrace
        ``trace.x`` holds the water-filling powers at the final cutoff,
        ``trace.status`` tells whether a constraint was binding.

    Raises
    ------
    InfeasibleError
        If the rate floor is unreachable or incompatible with the power cap.
    """
    bounds = lambda_bounds(problem)
    sub = static_subproblem(problem)
    hint = 0.5 * float(problem.channel.cnrs.max())
    lam0 = ratio_start(sub, hint)
    if method == "dinkelbach":
        return solve_constrained(sub, bounds, lam0, tol, max_iter)
    if method != "bisection":
        raise ValueError(f"unknown method {method!r}")

    gmax = float(problem.channel.cnrs.max())
    if gmax == 0 or sub.F(lam0) <= 0:
        trace = solve_constrained(sub, LambdaBounds(), lam0, tol, max_iter)
        trace.method = "bisection"
    else:
        trace = bisection_solver(sub, RootBracket.of(sub.F, lam0, gmax), tol=min(tol, 1e-13))
    lam = clamp_to_bounds(trace.lam, bounds)
    if lam != trace.lam:
        trace.solution = sub(lam)
        trace.lam = lam
        trace.status = Status.CLAMPED_MIN if lam == bounds.lam_min else Status.CLAMPED_MAX
    return trace


def flat_fading_closed_form(gamma: float, mu: float) -> tuple[float, float]:
    """Optimal cutoff and power for a single unconstrained flat channel.

    With ``s = gamma/lam`` the root condition becomes
    ``(log s - 1) s = mu*gamma - 1``, whence
    ``lam = gamma / exp(1 + W0((mu*gamma - 1)/e))``.

    >>> lam, p = flat_fading_closed_form(1.0, 1.0)
    >>> round(lam * math.e, 12), round(p, 12) == round(math.e - 1, 12)
    (1.0, True)
    """
    if not (gamma > 0 and mu > 0):
        raise DomainError("gamma and mu must be positive")
    w = lambert_w0((mu * gamma - 1.0) / math.e)
    s = math.exp(1.0 + w)
    lam = gamma / s
    p = max(0.0, 1.0 / lam - 1.0 / gamma)
    return lam, p


def apply_gap(channel: ParallelChannel, gap: float) -> ParallelChannel:
    """Scale CNRs by ``1/gap`` to model a constant SNR gap to capacity."""
    if not gap >= 1:
        raise DomainError(f"gap must be >= 1 (nonnegative in dB), got {gap!r}")
    return ParallelChannel(channel.cnrs / gap, channel.p_max)


def tradeoff_curve(problem: StaticEEProblem, lams) -> dict[str, np.ndarray]:
    """Rate-versus-power points of water-filling at each cutoff in ``lams``."""
    lams = np.asarray(lams, dtype=float)
    power = np.empty_like(lams)
    rate = np.empty_like(lams)
    for k, lam in enumerate(lams):
        alloc = waterfill_allocate(problem.channel, lam, problem.mu)
        power[k] = problem.mu + alloc.sum_power
        rate[k] = alloc.sum_rate
    return {"lam": lams, "power": power, "rate": rate}
