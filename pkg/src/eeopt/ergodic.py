"""Energy efficiency on time-varying channels with causal CSI.

The transmitter sees the current CNR ``gamma`` and sends with
``p(gamma) = [1/lam - 1/gamma]^+``, so ``lam`` is a cutoff CNR below which
it stays silent. The ergodic problem is solved by Dinkelbach on

    F(lam) = E[log(gamma/lam); gamma > lam] - lam*(mu + E[(1/lam - 1/gamma)^+]).

Rayleigh fading has closed forms in the exponential integrals ``E_0`` and
``E_1``; other distributions go through quadrature. Parallel subchannels
with a joint distribution (including MIMO after SVD) are handled by Monte
Carlo with one fixed sample set reused for every ``lam``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DomainError
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
from .numerics import (
    QuadratureSpec,
    RootBracket,
    bracket_decreasing,
    exp_int,
    find_root,
    integrate,
)

__all__ = [
    "RayleighFading",
    "TabulatedFading",
    "DiscreteFading",
    "ErgodicProblem",
    "ErgodicSolution",
    "ParallelFadingScenario",
    "policy",
    "averages",
    "averages_quadrature",
    "eval_F_pdf",
    "eval_F_rayleigh",
    "ergodic_subproblem",
    "ergodic_lambda_bounds",
    "solve_ergodic",
    "independent_rayleigh",
    "deterministic_scenario",
    "mimo_scenario",
    "sampled_subproblem",
    "solve_parallel_fading",
]


def policy(lam: float, gamma):
    """Instantaneous power ``[1/lam - 1/gamma]^+``; zero for ``gamma <= lam``.

    >>> policy(1.0, 2.0), policy(1.0, 0.5), policy(1.0, 1.0)
    (0.5, 0.0, 0.0)
    """
    if not lam > 0:
        raise DomainError(f"cutoff must be positive, got {lam!r}")
    g = np.asarray(gamma, dtype=float)
    p = np.zeros_like(g)
    on = g > lam
    p[on] = 1.0 / lam - 1.0 / g[on]
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class RayleighFading:
    """Exponentially distributed CNR with mean ``mean_cnr``."""

    mean_cnr: float

    def __post_init__(self):
        if not self.mean_cnr > 0:
            raise DomainError("mean CNR must be positive")

    @property
    def mean(self) -> float:
        return self.mean_cnr

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, math.inf

    def pdf(self, g):
        g = np.asarray(g, dtype=float)
        out = np.where(g >= 0, np.exp(-np.maximum(g, 0) / self.mean_cnr) / self.mean_cnr, 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, g: float) -> float:
        return -math.expm1(-max(g, 0.0) / self.mean_cnr)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(self.mean_cnr, size=n)


@dataclass(frozen=True)
class TabulatedFading:
    """CNR density given by samples on a grid, linear in between.

    The density must integrate to one within 1e-6 (trapezoid rule, which
    is exact for the piecewise-linear interpolant).
    """

    grid: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        f = np.array(self.density, dtype=float)
        if g.ndim != 1 or g.shape != f.shape or g.size < 2:
            raise DomainError("grid and density must be 1-D arrays of equal length >= 2")
        if g[0] < 0 or np.any(np.diff(g) <= 0):
            raise DomainError("grid must be nonnegative and strictly increasing")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise DomainError("density must be finite and nonnegative")
        mass = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(g)))
        if abs(mass - 1.0) > 1e-6:
            raise DomainError(f"density integrates to {mass!r}, not 1")
        g.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "density", f)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def mean(self) -> float:
        x, f = self.grid, self.density
        # exact for the piecewise-linear density
        h = np.diff(x)
        return float(np.sum(h * (f[:-1] * (2 * x[:-1] + x[1:]) + f[1:] * (x[:-1] + 2 * x[1:])) / 6.0))

    def pdf(self, g):
        out = np.interp(g, self.grid, self.density, left=0.0, right=0.0)
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, g: float) -> float:
        lo, hi = self.support
        if g <= lo:
            return 0.0
        return min(1.0, integrate(self.pdf, lo, min(g, hi), breakpoints=self.grid))

    def tail_averages(self, lam: float) -> tuple[float, float, float]:
        """Exact averages of the cutoff policy under the interpolated density.

        On each segment the density is ``a + b*g``, whose products with
        ``log(g/lam)``, ``1/lam - 1/g`` and 1 have elementary antiderivatives.
        """
        x, f = self.grid, self.density
        keep = x[1:] > lam
        x0 = np.maximum(x[:-1][keep], lam)
        x1 = x[1:][keep]
        b = (f[1:] - f[:-1])[keep] / np.diff(x)[keep]
        a = f[:-1][keep] - b * x[:-1][keep]

        def rate(u):
            L = np.log(u / lam)
            return a * (u * L - u) + b * (0.5 * u * u * L - 0.25 * u * u)

        def power(u):
            return a * (u / lam - np.log(u / lam)) + b * (0.5 * u * u / lam - u)

        def mass(u):
            return a * u + 0.5 * b * u * u

        return (
            float(np.sum(rate(x1) - rate(x0))),
            float(np.sum(power(x1) - power(x0))),
            float(np.sum(mass(x1) - mass(x0))),
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # inverse transform on the piecewise-linear CDF evaluated on a fine grid
        x = np.linspace(self.grid[0], self.grid[-1], 20 * self.grid.size)
        c = np.concatenate([[0.0], np.cumsum(0.5 * (self.pdf(x)[1:] + self.pdf(x)[:-1]) * np.diff(x))])
        return np.interp(rng.random(n) * c[-1], c, x)


@dataclass(frozen=True)
class DiscreteFading:
    """Finitely many CNR states with given probabilities."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        q = np.array(self.probs, dtype=float).ravel()
        if v.shape != q.shape or v.size == 0:
            raise DomainError("values and probabilities must have equal nonzero length")
        if np.any(v < 0) or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise DomainError("need nonnegative CNRs and probabilities summing to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", q)

    @classmethod
    def point(cls, gamma: float) -> "DiscreteFading":
        return cls(np.array([gamma]), np.array([1.0]))

    @property
    def mean(self) -> float:
        return float(np.sum(self.values * self.probs))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values.min()), float(self.values.max())

    def cdf(self, g: float) -> float:
        return float(np.sum(self.probs[self.values <= g]))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(self.values, size=n, p=self.probs)


@dataclass(frozen=True)
class ErgodicProblem:
    """Ergodic EE maximization on a flat fading channel.

    Attributes
    ----------
    fading : RayleighFading, TabulatedFading or DiscreteFading
    mu : float
        Circuit power per Hz.
    avg_power_max : float, optional
        Cap on the average transmit power.
    avg_rate_min : float, optional
        Floor on the average rate in nat/s/Hz.
    """

    fading: object
    mu: float
    avg_power_max: float | None = None
    avg_rate_min: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError("mu must be positive")
        if self.avg_power_max is not None and not self.avg_power_max > 0:
            raise DomainError("average power cap must be positive")
        if self.avg_rate_min is not None and not self.avg_rate_min >= 0:
            raise DomainError("average rate floor must be nonnegative")


def averages_quadrature(
    fading, lam: float, spec: QuadratureSpec | None = None
) -> tuple[float, float, float]:
    """``(E[rate], E[power], P(gamma > lam))`` by quadrature against the pdf."""
    if not lam > 0:
        raise DomainError(f"cutoff must be positive, got {lam!r}")
    _, hi = fading.support
    if lam >= hi:
        return 0.0, 0.0, 0.0
    pts = getattr(fading, "grid", None)
    pdf = fading.pdf
    rate = integrate(lambda g: math.log(g / lam) * pdf(g), lam, hi, spec, pts)
    power = integrate(lambda g: (1.0 / lam - 1.0 / g) * pdf(g), lam, hi, spec, pts)
    on = integrate(pdf, lam, hi, spec, pts)
    return rate, power, on


def averages(fading, lam: float) -> tuple[float, float, float]:
    """``(E[rate], E[power], P(gamma > lam))`` under the cutoff policy.

    Rayleigh fading uses ``E[rate] = E1(x)``,
    ``E[power] = (E0(x) - E1(x))/mean`` with ``x = lam/mean``; point
    masses are summed; tabulated densities are integrated exactly
    segment by segment; anything else goes through quadrature.
    """
    if not lam > 0:
        raise DomainError(f"cutoff must be positive, got {lam!r}")
    if isinstance(fading, RayleighFading):
        x = lam / fading.mean_cnr
        e1 = exp_int(1, x)
        return e1, (exp_int(0, x) - e1) / fading.mean_cnr, math.exp(-x)
    if isinstance(fading, DiscreteFading):
        on = fading.values > lam
        g, q = fading.values[on], fading.probs[on]
        return (
            float(np.sum(q * np.log(g / lam))),
            float(np.sum(q * (1.0 / lam - 1.0 / g))),
            float(q.sum()),
        )
    if isinstance(fading, TabulatedFading):
        return fading.tail_averages(lam)
    return averages_quadrature(fading, lam)


def eval_F_pdf(problem: ErgodicProblem, lam: float, spec: QuadratureSpec | None = None) -> float:
    """``F(lam)`` by quadrature over ``[lam, sup support)`` against the pdf.

    Point-mass distributions are summed directly since they have no density.
    """
    if isinstance(problem.fading, DiscreteFading):
        rate, power, _ = averages(problem.fading, lam)
    else:
        rate, power, _ = averages_quadrature(problem.fading, lam, spec)
    return rate - lam * (problem.mu + power)


def eval_F_rayleigh(mean_cnr: float, mu: float, lam: float) -> float:
    """Closed-form ``F(lam)`` for Rayleigh fading.

    ``F = E1(x) - lam*(mu + (E0(x) - E1(x))/mean_cnr)`` with ``x = lam/mean_cnr``.
    """
    if not (mean_cnr > 0 and mu > 0 and lam > 0):
        raise DomainError("mean CNR, mu and lam must be positive")
    x = lam / mean_cnr
    e1 = exp_int(1, x)
    return e1 - lam * (mu + (exp_int(0, x) - e1) / mean_cnr)


def ergodic_subproblem(problem: ErgodicProblem, quadrature: bool = False) -> ParametricSubproblem:
    """Parametric program whose decision variable is the cutoff policy itself."""
    fading, mu = problem.fading, problem.mu
    avg = averages_quadrature if quadrature and not isinstance(fading, DiscreteFading) else averages

    def solve(lam):
        if lam == 0:
            # full-CSI policy with infinite water level; only F matters here
            return SubproblemSolution(0.0, np.array([0.0]), math.inf, math.inf)
        rate, power, on = avg(fading, lam)
        return SubproblemSolution(
            lam, np.array([lam]), rate, mu + power, extra={"on_probability": on}
        )

    return ParametricSubproblem(solve, name="ergodic")


def _decreasing_root(f, x0: float) -> float:
    b = bracket_decreasing(f, x0)
    return find_root(f, b, tol=1e-300)


def ergodic_lambda_bounds(problem: ErgodicProblem) -> LambdaBounds:
    """Cutoff interval implied by the average power cap and rate floor.

    Both averages decrease strictly in ``lam``, so ``E[power] <= cap`` means
    ``lam >= lam_min`` and ``E[rate] >= floor`` means ``lam <= lam_max``.
    """
    fading = problem.fading
    x0 = max(fading.mean, 1e-300)
    lam_min, lam_max = 0.0, math.inf
    if problem.avg_power_max is not None:
        cap = problem.avg_power_max
        lam_min = _decreasing_root(lambda l: averages(fading, l)[1] - cap, x0)
    if problem.avg_rate_min:
        floor = problem.avg_rate_min
        lam_max = _decreasing_root(lambda l: averages(fading, l)[0] - floor, x0)
    return LambdaBounds(lam_min, lam_max)


@dataclass
class ErgodicSolution:
    """Optimal cutoff policy and its long-run averages.

    Attributes
    ----------
    lam : float
        Cutoff CNR.
    avg_rate, avg_power : float
        Long-run averages under the policy.
    ee : float
        ``avg_rate / (mu + avg_power)``.
    idle_probability : float
        Fraction of time the transmitter is silent.
    status : Status
    trace : DinkelbachTrace
    std_error : float
        Monte Carlo standard error of ``ee`` (NaN for exact averages).
    undersampled : bool
        True when ``std_error`` exceeds the requested relative threshold.
    """

    lam: float
    avg_rate: float
    avg_power: float
    ee: float
    idle_probability: float
    status: Status
    trace: DinkelbachTrace
    mu: float
    std_error: float = math.nan
    n_samples: int | None = None
    undersampled: bool = False
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def iterations(self) -> int:
        return self.trace.iterations


def solve_ergodic(
    problem: ErgodicProblem,
    tol: float = DEFAULT_TOL,
    method: str = "dinkelbach",
    quadrature: bool = False,
    max_iter: int = 100,
) -> ErgodicSolution:
    """Maximize the ergodic EE of a flat fading channel.

    Parameters
    ----------
    problem : ErgodicProblem
    tol : float
        Stopping tolerance on ``|F|`` (Dinkelbach) or on the relative
        bracket width (bisection).
    method : {"dinkelbach", "bisection"}
    quadrature : bool
        Evaluate the averages by quadrature even when a closed form exists.

    Raises
    ------
    InfeasibleError
        If the power cap forces a cutoff above the one the rate floor allows.
    """
    bounds = ergodic_lambda_bounds(problem)
    sub = ergodic_subproblem(problem, quadrature)
    lam0 = ratio_start(sub, 0.5 * problem.fading.mean)
    if method == "dinkelbach":
        trace = solve_constrained(sub, bounds, lam0, tol, max_iter)
    elif method == "bisection":
        hi = lam0
        while sub.F(hi) > 0:
            hi *= 2.0
        if sub.F(lam0) > 0:
            trace = bisection_solver(sub, RootBracket.of(sub.F, lam0, hi), tol=min(tol, 1e-13))
        else:
            trace = solve_constrained(sub, LambdaBounds(), lam0, tol, max_iter)
            trace.method = "bisection"
        lam = clamp_to_bounds(trace.lam, bounds)
        if lam != trace.lam:
            trace.solution = sub(lam)
            trace.lam = lam
            trace.status = Status.CLAMPED_MIN if lam == bounds.lam_min else Status.CLAMPED_MAX
    else:
        raise ValueError(f"unknown method {method!r}")

    sol = trace.solution
    on = sol.extra["on_probability"]
    return ErgodicSolution(
        lam=trace.lam,
        avg_rate=sol.f1,
        avg_power=sol.f2 - problem.mu,
        ee=sol.ratio,
        idle_probability=min(1.0, max(0.0, 1.0 - on)),
        status=trace.status,
        trace=trace,
        mu=problem.mu,
    )


@dataclass(frozen=True)
class ParallelFadingScenario:
    """Joint CNR distribution of ``n_sub`` subchannels, known through a sampler.

    ``sampler(rng, n)`` must return an ``(n, n_sub)`` array of nonnegative
    CNRs. :meth:`sample` always draws from a fresh generator seeded with
    ``seed``, so the sample set is a pure function of the scenario.
    """

    n_sub: int
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    n_samples: int = 100_000
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if self.n_sub < 1 or self.n_samples < 1:
            raise DomainError("need at least one subchannel and one sample")

    def sample(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        g = np.asarray(self.sampler(rng, self.n_samples), dtype=float)
        if g.shape != (self.n_samples, self.n_sub):
            raise DomainError(
                f"sampler returned shape {g.shape}, expected {(self.n_samples, self.n_sub)}"
            )
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise DomainError("sampler produced negative or non-finite CNRs")
        return g

    def with_samples(self, n_samples: int, seed: int | None = None) -> "ParallelFadingScenario":
        return ParallelFadingScenario(
            self.n_sub, self.sampler, n_samples, self.seed if seed is None else seed, self.name
        )


def independent_rayleigh(mean_cnrs, n_samples: int = 100_000, seed: int = 0) -> ParallelFadingScenario:
    """Independent Rayleigh subchannels with the given mean CNRs."""
    m = np.asarray(mean_cnrs, dtype=float).ravel()
    if m.size == 0 or np.any(m <= 0):
        raise DomainError("mean CNRs must be positive")

    def sampler(rng, n):
        return rng.exponential(1.0, size=(n, m.size)) * m

    return ParallelFadingScenario(m.size, sampler, n_samples, seed, "independent-rayleigh")


def deterministic_scenario(cnrs, n_samples: int = 1) -> ParallelFadingScenario:
    """A channel that never changes; useful as a degenerate check."""
    g = np.asarray(cnrs, dtype=float).ravel()

    def sampler(rng, n):
        return np.broadcast_to(g, (n, g.size)).copy()

    return ParallelFadingScenario(g.size, sampler, n_samples, 0, "deterministic")


def mimo_scenario(
    n_t: int, n_r: int, gain: float, n_samples: int = 100_000, seed: int = 0
) -> ParallelFadingScenario:
    """Rayleigh MIMO link decomposed into eigenchannels.

    Each realization is an ``n_r x n_t`` matrix of i.i.d. unit-variance
    circularly symmetric Gaussians; the subchannel CNRs are its squared
    singular values times ``gain`` (path gain over noise PSD), sorted in
    decreasing order. There are ``min(n_t, n_r)`` subchannels.
    """
    if n_t < 1 or n_r < 1 or int(n_t) != n_t or int(n_r) != n_r:
        raise DomainError("antenna counts must be positive integers")
    if not gain > 0:
        raise DomainError("gain must be positive")
    n_t, n_r = int(n_t), int(n_r)
    k = min(n_t, n_r)

    def sampler(rng, n):
        out = np.empty((n, k))
        # bounded batches keep memory flat for large n
        for start in range(0, n, 65536):
            m = min(65536, n - start)
            h = (rng.standard_normal((m, n_r, n_t)) + 1j * rng.standard_normal((m, n_r, n_t)))
            sv = np.linalg.svd(h / math.sqrt(2.0), compute_uv=False)
            out[start:start + m] = gain * sv ** 2
        return out

    return ParallelFadingScenario(k, sampler, n_samples, seed, f"mimo-{n_t}x{n_r}")


def _sample_sums(G: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-realization sum rate and sum power of the cutoff policy."""
    p = np.zeros_like(G)
    on = G > lam
    if lam == 0:
        raise DomainError("cutoff must be positive")
    p[on] = 1.0 / lam - 1.0 / G[on]
    r = np.log1p(G * p)
    return r.sum(axis=1), p.sum(axis=1)


def sampled_subproblem(G: np.ndarray, mu: float) -> ParametricSubproblem:
    """Parametric program on a fixed sample set (common random numbers)."""

    def solve(lam):
        if lam == 0:
            return SubproblemSolution(0.0, np.zeros(G.shape[1]), math.inf, math.inf)
        r, p = _sample_sums(G, lam)
        return SubproblemSolution(
            lam, np.array([lam]), float(r.mean()), mu + float(p.mean()),
            extra={"rate_samples": r, "power_samples": p},
        )

    return ParametricSubproblem(solve, name="sampled")


def solve_parallel_fading(
    scenario: ParallelFadingScenario,
    mu: float,
    tol: float = DEFAULT_TOL,
    avg_power_max: float | None = None,
    avg_rate_min: float | None = None,
    rel_error_threshold: float = 0.01,
    max_iter: int = 100,
) -> ErgodicSolution:
    """Ergodic EE of parallel fading subchannels by Monte Carlo.

    The policy acts on each subchannel separately with one common cutoff.
    One sample set is drawn and reused for every ``lam`` so the sampled
    ``F`` is a deterministic, strictly decreasing function. The standard
    error of the EE estimate follows from the delta method:
    ``Var(EE) ~ Var(r - EE*p) / (N (mu + mean p)^2)``.

    Optional average sum-power and sum-rate constraints are mapped to
    cutoff bounds with the sampled averages.

    The idle probability is the fraction of realizations in which every
    subchannel is silent.
    """
    if not mu > 0:
        raise DomainError("mu must be positive")
    G = scenario.sample()
    sub = sampled_subproblem(G, mu)
    x0 = max(float(G.max(axis=1).mean()), 1e-300)

    lam_min, lam_max = 0.0, math.inf
    if avg_power_max is not None:
        if not avg_power_max > 0:
            raise DomainError("average power cap must be positive")
        lam_min = _decreasing_root(lambda l: _sample_sums(G, l)[1].mean() - avg_power_max, x0)
    if avg_rate_min:
        lam_max = _decreasing_root(lambda l: _sample_sums(G, l)[0].mean() - avg_rate_min, x0)
    bounds = LambdaBounds(lam_min, lam_max)

    lam0 = ratio_start(sub, 0.5 * x0)
    trace = solve_constrained(sub, bounds, lam0, tol, max_iter)
    sol = trace.solution
    r, p = sol.extra["rate_samples"], sol.extra["power_samples"]
    n = G.shape[0]
    ee = sol.ratio
    if n > 1:
        se = float(np.std(r - ee * p, ddof=1) / (math.sqrt(n) * sol.f2))
    else:
        se = math.nan
    idle = float(np.mean(np.all(G <= trace.lam, axis=1)))
    under = bool(n > 1 and se > rel_error_threshold * ee)
    if under:
        warnings.warn(
            f"{scenario.name}: EE standard error {se:.3g} exceeds "
            f"{rel_error_threshold:.0%} of the estimate; increase n_samples",
            RuntimeWarning,
            stacklevel=2,
        )
    return ErgodicSolution(
        lam=trace.lam,
        avg_rate=sol.f1,
        avg_power=sol.f2 - mu,
        ee=ee,
        idle_probability=idle,
        status=trace.status,
        trace=trace,
        mu=mu,
        std_error=se,
        n_samples=n,
        undersampled=under,
        extra={"subchannel_idle": np.mean(G <= trace.lam, axis=0)},
    )
