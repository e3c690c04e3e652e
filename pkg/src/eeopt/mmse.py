"""Rate functions of discrete inputs and mercury/water-filling.

For an input constellation of unit average power sent over a complex AWGN
channel with SNR ``rho``, the mutual information ``r(rho)`` satisfies
``r'(rho) = MMSE(rho)``. Tabulating MMSE and integrating it gives both
``r`` and the inverse ``MMSE^-1`` needed by the allocation rule::

    p_i = MMSE^-1(lam/gamma_i) / gamma_i   if lam < gamma_i, else 0

Real constellations (PAM) occupy the in-phase dimension only, so the noise
seen by them has variance 1/2. Square QAM is built from two PAM branches
in quadrature, each carrying half the power, which gives
``MMSE_QAM(rho) = MMSE_PAM(rho/2)`` and ``r_QAM(rho) = 2 r_PAM(rho/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .exceptions import DomainError, NumericalError, TableRangeError
from .fracprog import (
    DEFAULT_TOL,
    DinkelbachTrace,
    ParametricSubproblem,
    SubproblemSolution,
    dinkelbach,
    ratio_start,
)
from .numerics import RootBracket, find_root
from .waterfill import Allocation

__all__ = [
    "Constellation",
    "MmseTable",
    "MercuryAllocation",
    "log_mmse_of",
    "mmse_of",
    "build_table",
    "mmse_inverse",
    "mercury_allocate",
    "mercury_subproblem",
    "eval_F_mmse",
    "solve_mmse_ee",
    "save_table",
    "load_table",
    "TABLE_FORMAT_VERSION",
]

TABLE_FORMAT_VERSION = 1

# MMSE values below this are not representable with headroom; tables stop there
LOG_MMSE_FLOOR = math.log(1e-300)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(2)


@dataclass(frozen=True)
class Constellation:
    """A unit-power input alphabet.

    Use the constructors :meth:`gaussian`, :meth:`pam`, :meth:`qam` and
    :meth:`point` rather than building one by hand.

    Attributes
    ----------
    points : np.ndarray
        Complex symbols ``s_l`` (empty for the Gaussian input).
    probs : np.ndarray
        Symbol probabilities ``q_l``.
    label : str
        ``"gaussian"``, ``"<m>-pam"``, ``"<m>-qam"`` or ``"point"``.
    order : int
        Number of symbols, 0 for the Gaussian input.
    """

    points: np.ndarray
    probs: np.ndarray
    label: str
    order: int

    def __post_init__(self):
        if self.order == 0:
            return
        q = np.asarray(self.probs, dtype=float)
        s = np.asarray(self.points, dtype=complex)
        if s.shape != q.shape or s.ndim != 1 or s.size != self.order:
            raise DomainError("points and probabilities must be 1-D of length order")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise DomainError("symbol probabilities must be nonnegative and sum to 1")
        power = float(np.sum(q * np.abs(s) ** 2))
        if abs(power - 1.0) > 1e-12:
            raise DomainError(f"constellation must have unit power, got {power!r}")

    @classmethod
    def gaussian(cls) -> "Constellation":
        return cls(np.empty(0, complex), np.empty(0), "gaussian", 0)

    @classmethod
    def pam(cls, m: int) -> "Constellation":
        """Equiprobable ``m``-PAM with points ``(2l-1-m)*sqrt(3/(m^2-1))``."""
        if int(m) != m or m < 2:
            raise DomainError(f"PAM order must be an integer >= 2, got {m!r}")
        m = int(m)
        l = np.arange(1, m + 1)
        s = (2 * l - 1 - m) * math.sqrt(3.0 / (m * m - 1))
        return cls(s.astype(complex), np.full(m, 1.0 / m), f"{m}-pam", m)

    @classmethod
    def qam(cls, m: int) -> "Constellation":
        """Square ``m``-QAM: a ``sqrt(m)``-PAM on each of I and Q at half power."""
        k = math.isqrt(int(m)) if int(m) == m and m >= 4 else 0
        if k < 2 or k * k != m:
            raise DomainError(f"QAM order must be a perfect square >= 4, got {m!r}")
        a = cls.pam(k).points.real / math.sqrt(2.0)
        s = (a[:, None] + 1j * a[None, :]).ravel()
        return cls(s, np.full(k * k, 1.0 / (k * k)), f"{int(m)}-qam", int(m))

    @classmethod
    def point(cls) -> "Constellation":
        """A single symbol; it carries no information."""
        return cls(np.ones(1, complex), np.ones(1), "point", 1)

    @classmethod
    def from_label(cls, label: str) -> "Constellation":
        """Parse ``"gaussian"``, ``"point"``, ``"16-qam"``, ``"4-pam"``..."""
        label = label.strip().lower()
        if label in ("gaussian", "point"):
            return getattr(cls, label)()
        m, _, kind = label.partition("-")
        if kind not in ("pam", "qam") or not m.isdigit():
            raise DomainError(f"unknown constellation label {label!r}")
        return getattr(cls, kind)(int(m))

    @property
    def is_gaussian(self) -> bool:
        return self.order == 0

    @property
    def is_real(self) -> bool:
        return self.order > 0 and bool(np.all(self.points.imag == 0))

    @property
    def variance(self) -> float:
        """Prior variance of the input, i.e. ``MMSE(0)``."""
        if self.is_gaussian:
            return 1.0
        mean = np.sum(self.probs * self.points)
        return float(np.sum(self.probs * np.abs(self.points - mean) ** 2))

    @property
    def max_rate(self) -> float:
        """Entropy of the input in nats, the limit of ``r(rho)``."""
        if self.is_gaussian:
            return math.inf
        q = self.probs[self.probs > 0]
        return float(-np.sum(q * np.log(q)))

    def branch(self) -> "Constellation":
        """The PAM constellation carried by each quadrature branch of a QAM."""
        if not self.label.endswith("-qam"):
            raise DomainError("only QAM constellations have quadrature branches")
        return Constellation.pam(math.isqrt(self.order))


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(top, axis) + np.log(np.sum(np.exp(x - top), axis=axis))


def _log_mmse_real(s: np.ndarray, q: np.ndarray, rho: float) -> float:
    """``log MMSE`` of a real alphabet whose noise has variance 1/2.

    Works with the error form ``sum_l q_l E[(s_l - E[s|y])^2]`` entirely in
    the log domain, so values far below the double range of ``1 - ...`` stay
    accurate. At high SNR the error mass sits in windows of width about
    ``1/d`` around the decision midpoints (``d`` the scaled symbol spacing),
    so the trapezoid lattice is fine there and coarse elsewhere.
    """
    a = math.sqrt(rho) * s
    srt = np.sort(a)
    lo, hi = srt[0] - 8.0, srt[-1] + 8.0
    d = float(np.diff(srt).min()) if s.size > 1 else 1.0
    h = min(0.05, 0.1 / d)
    n = int(math.ceil((hi - lo) / h))
    # all nodes sit on one lattice lo + h*j so overlapping windows stay uniform
    stride = max(1, int(round(0.25 / h))) if d >= 4 else 1
    keep = np.zeros(n + 1, dtype=bool)
    keep[::stride] = True
    keep[-1] = True
    for c in 0.5 * (srt[1:] + srt[:-1]):
        # the integrand falls by exp(-0.1) per fine step away from a midpoint
        j = int(round((c - lo) / h))
        keep[max(0, j - 350): j + 351] = True
    y = lo + h * np.flatnonzero(keep)

    with np.errstate(divide="ignore"):
        E = np.log(q) - (y[:, None] - a[None, :]) ** 2
        logw = E - _lse(E, 1)[:, None]
        D = s[:, None] - s[None, :]
        log_pos = np.where(D > 0, np.log(np.abs(D)), -np.inf)
        log_neg = np.where(D < 0, np.log(np.abs(D)), -np.inf)
    # s_l - E[s|y] split into positive and negative parts
    P = _lse(logw[:, None, :] + log_pos[None], 2)
    N = _lse(logw[:, None, :] + log_neg[None], 2)
    big, small = np.maximum(P, N), np.minimum(P, N)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_err = np.where(np.isneginf(big), -np.inf, big + np.log(-np.expm1(small - big)))
    L = _lse(E + 2.0 * log_err, 1)
    top = L.max()
    if not np.isfinite(top):
        return -math.inf
    v = np.exp(L - top)
    area = float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(y)))
    return float(top + math.log(area) - 0.5 * math.log(math.pi))


def log_mmse_of(constellation: Constellation, rho: float) -> float:
    """Natural log of :func:`mmse_of`; finite even where MMSE underflows."""
    if not rho >= 0:
        raise DomainError(f"SNR must be nonnegative, got {rho!r}")
    c = constellation
    if c.is_gaussian:
        return -math.log1p(rho)
    var = c.variance
    if var == 0:
        return -math.inf
    if rho == 0:
        return math.log(var)
    if c.label.endswith("-qam"):
        b = c.branch()
        return _log_mmse_real(b.points.real, b.probs, rho / 2.0)
    if c.is_real:
        return _log_mmse_real(c.points.real, c.probs, rho)
    raise DomainError(f"MMSE of non-separable complex constellation {c.label!r} is not supported")


def mmse_of(constellation: Constellation, rho: float) -> float:
    """Minimum mean-square error of estimating the input at SNR ``rho``.

    Examples
    --------
    >>> mmse_of(Constellation.gaussian(), 1.0)
    0.5
    >>> mmse_of(Constellation.qam(16), 0.0)
    1.0
    """
    c = constellation
    if c.is_gaussian:
        if not rho >= 0:
            raise DomainError(f"SNR must be nonnegative, got {rho!r}")
        return 1.0 / (1.0 + rho)
    return math.exp(log_mmse_of(c, rho))


def _monotone_slopes(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Spline slopes limited so the Hermite cubic stays monotone.

    Fourth-order accurate where the data are smooth; the Fritsch-Carlson
    limiter only engages near flat stretches.
    """
    if t.size < 4:
        return np.gradient(v, t)
    m = CubicSpline(t, v)(t, 1)
    delta = np.diff(v) / np.diff(t)
    out = m.copy()
    for i in range(t.size):
        left = delta[i - 1] if i > 0 else delta[0]
        right = delta[i] if i < delta.size else delta[-1]
        if left * right <= 0 or m[i] * left <= 0:
            out[i] = 0.0
        else:
            cap = 3.0 * min(abs(left), abs(right))
            out[i] = math.copysign(min(abs(m[i]), cap), left)
    return out


@dataclass(frozen=True)
class MmseTable:
    """Sampled MMSE and rate of one constellation.

    The first sample is ``rho = 0``; the rest lie on a logarithmic grid.
    Between samples ``log MMSE`` is a monotone cubic in ``log rho`` and
    ``r`` is the cubic Hermite interpolant with slopes ``MMSE``.

    Attributes
    ----------
    label : str
    order : int
        Constellation size, 0 for Gaussian.
    rho, mmse, log_mmse, rate : np.ndarray
        Samples; ``rate`` is in nats per channel use.
    """

    label: str
    order: int
    rho: np.ndarray
    mmse: np.ndarray
    log_mmse: np.ndarray
    rate: np.ndarray
    _fwd: object = field(default=None, init=False, repr=False, compare=False)
    _rate: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("rho", "mmse", "log_mmse", "rate"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.rho.size < 2 or self.rho[0] != 0 or np.any(np.diff(self.rho) <= 0):
            raise DomainError("table grid must start at 0 and increase strictly")
        if self.degenerate:
            return
        t = np.log(self.rho[1:])
        v = self.log_mmse[1:]
        object.__setattr__(self, "_fwd", CubicHermiteSpline(t, v, _monotone_slopes(t, v)))
        object.__setattr__(self, "_rate", CubicHermiteSpline(self.rho, self.rate, self.mmse))

    @property
    def degenerate(self) -> bool:
        """True for an input without randomness (MMSE identically zero)."""
        return bool(self.mmse[0] == 0)

    @property
    def rho_max(self) -> float:
        return float(self.rho[-1])

    @property
    def floor(self) -> float:
        """Smallest tabulated MMSE; inverses below it are out of range."""
        return float(self.mmse[-1])

    def _check_range(self, rho: np.ndarray):
        if np.any(rho < 0) or np.any(rho > self.rho_max * (1 + 1e-12)):
            raise TableRangeError(
                f"SNR outside the {self.label} table range [0, {self.rho_max:g}]"
            )

    def mmse_at(self, rho):
        """Interpolated MMSE; accepts scalars or arrays."""
        r = np.asarray(rho, dtype=float)
        self._check_range(r)
        if self.degenerate:
            out = np.zeros_like(r)
        else:
            out = np.empty_like(r)
            low = r < self.rho[1]
            # linear in rho below the first positive grid point
            out[low] = self.mmse[0] + (self.mmse[1] - self.mmse[0]) * r[low] / self.rho[1]
            hi = ~low
            out[hi] = np.exp(self._fwd(np.log(np.minimum(r[hi], self.rho_max))))
        return float(out) if out.ndim == 0 else out

    def rate_at(self, rho):
        """Interpolated mutual information ``r(rho)`` in nats."""
        r = np.asarray(rho, dtype=float)
        self._check_range(r)
        if self.degenerate:
            out = np.zeros_like(r)
        else:
            out = self._rate(np.minimum(r, self.rho_max))
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, zeta: float) -> float:
        """``MMSE^-1(zeta)``; see :func:`mmse_inverse`."""
        return mmse_inverse(self, zeta)


def build_table(
    constellation: Constellation,
    rho_max: float = 1e4,
    n_points: int = 512,
    rho_min: float = 1e-3,
) -> MmseTable:
    """Tabulate MMSE and rate on ``{0} U logspace(rho_min, rho_max, n_points)``.

    The rate at each sample is the running integral of MMSE, computed with
    two-point Gauss-Legendre rules in ``log rho`` on every grid interval.
    For discrete inputs the grid is cut where MMSE drops below 1e-300; the
    rate is already at its ceiling there.

    Raises
    ------
    NumericalError
        If the sampled MMSE is not strictly decreasing.
    """
    if not rho_max > rho_min > 0:
        raise DomainError("need 0 < rho_min < rho_max")
    if n_points < 64:
        raise DomainError("n_points must be at least 64")
    c = constellation
    grid = np.logspace(math.log10(rho_min), math.log10(rho_max), n_points)
    rho = np.concatenate([[0.0], grid])
    var = c.variance

    if var == 0:
        z = np.zeros_like(rho)
        return MmseTable(c.label, c.order, rho, z, np.full_like(rho, -np.inf), z)

    logm = np.empty_like(rho)
    logm[0] = math.log(var)
    n_keep = rho.size
    for i in range(1, rho.size):
        logm[i] = log_mmse_of(c, rho[i])
        if logm[i] < LOG_MMSE_FLOOR:
            n_keep = i
            break
    rho, logm = rho[:n_keep], logm[:n_keep]

    bad = np.flatnonzero(np.diff(logm) >= 0)
    if bad.size:
        i = int(bad[0])
        raise NumericalError(
            f"{c.label}: MMSE not decreasing between rho={rho[i]:.6g} "
            f"({math.exp(logm[i]):.17g}) and rho={rho[i + 1]:.6g} ({math.exp(logm[i + 1]):.17g})"
        )

    def mmse_f(x):
        return math.exp(log_mmse_of(c, x))

    pieces = np.zeros(rho.size)
    # first interval, linear in rho
    half = 0.5 * rho[1]
    pieces[1] = half * sum(w * mmse_f(half * (1 + x)) for x, w in zip(_GL_NODES, _GL_WEIGHTS))
    t = np.log(rho[1:])
    for i in range(1, rho.size - 1):
        mid, rad = 0.5 * (t[i - 1] + t[i]), 0.5 * (t[i] - t[i - 1])
        acc = 0.0
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            u = mid + rad * x
            acc += w * math.exp(log_mmse_of(c, math.exp(u)) + u)
        pieces[i + 1] = rad * acc
    rate = np.cumsum(pieces)
    return MmseTable(c.label, c.order, rho, np.exp(logm), logm, rate)


def mmse_inverse(table: MmseTable, zeta: float) -> float:
    """SNR at which the tabulated MMSE equals ``zeta``.

    Returns 0 for ``zeta >= MMSE(0)``. Interval search on the samples is
    followed by a root solve on the interpolant inside that interval.

    Raises
    ------
    TableRangeError
        If ``zeta`` is below the smallest tabulated MMSE.

    Examples
    --------
    >>> tab = build_table(Constellation.gaussian())
    >>> round(mmse_inverse(tab, 0.5), 6)
    1.0
    """
    zeta = float(zeta)
    if not zeta >= 0 or math.isnan(zeta):
        raise DomainError(f"MMSE level must be nonnegative, got {zeta!r}")
    m = table.mmse
    if zeta >= m[0]:
        return 0.0
    if zeta < m[-1]:
        raise TableRangeError(
            f"MMSE level {zeta:.6g} is below the {table.label} table floor "
            f"{m[-1]:.6g}; rebuild the table with a larger rho_max"
        )
    if zeta == m[-1]:
        return table.rho_max
    # m is decreasing: first index with m[i] <= zeta
    i = int(np.searchsorted(-m, -zeta, side="left"))
    if m[i] == zeta:
        return float(table.rho[i])
    if i == 1:
        return float(table.rho[1] * (m[0] - zeta) / (m[0] - m[1]))
    lz = math.log(zeta)
    t_lo, t_hi = math.log(table.rho[i - 1]), math.log(table.rho[i])
    g = lambda t: float(table._fwd(t)) - lz
    t = find_root(g, RootBracket(t_lo, t_hi, g(t_lo), g(t_hi)), tol=1e-15)
    return math.exp(t)


@dataclass
class MercuryAllocation(Allocation):
    """Allocation with the per-channel normalized cutoffs ``zeta = lam/gamma``."""

    zetas: np.ndarray | None = field(default=None, repr=False)


def _per_channel(tables, K: int) -> list[MmseTable]:
    if isinstance(tables, MmseTable):
        return [tables] * K
    tables = list(tables)
    if len(tables) != K:
        raise DomainError(f"need one table per subchannel ({K}), got {len(tables)}")
    return tables


def mercury_allocate(tables, cnrs, lam: float, mu: float | None = None) -> MercuryAllocation:
    """Mercury/water-filling powers at cutoff ``lam``.

    Parameters
    ----------
    tables : MmseTable or sequence of MmseTable
        One table shared by all subchannels, or one per subchannel.
    cnrs : array_like
        Subchannel CNRs ``gamma_i``.
    lam : float
        Cutoff, ``lam >= 0``.

    Returns
    -------
    MercuryAllocation
        Channel ``i`` is idle when ``zeta_i = lam/gamma_i >= 1``; otherwise
        ``p_i = MMSE^-1(zeta_i)/gamma_i`` and its gap to the Gaussian input is
        ``1/zeta_i - MMSE^-1(zeta_i)``.
    """
    g = np.asarray(cnrs, dtype=float).ravel()
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise DomainError("CNRs must be nonnegative")
    if not lam >= 0:
        raise DomainError(f"cutoff must be nonnegative, got {lam!r}")
    tabs = _per_channel(tables, g.size)
    p = np.zeros_like(g)
    r = np.zeros_like(g)
    gaps = np.ones_like(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        zetas = np.where(g > 0, lam / g, np.inf)
    for i, (tab, z) in enumerate(zip(tabs, zetas)):
        if z >= 1 or tab.degenerate:
            continue
        rho = mmse_inverse(tab, z)
        p[i] = rho / g[i]
        r[i] = tab.rate_at(rho)
        gaps[i] = 1.0 / z - rho if z > 0 else 1.0
    return MercuryAllocation(
        p, r, math.nan if mu is None else float(mu), float(lam), gaps, zetas=zetas
    )


def mercury_subproblem(tables, cnrs, mu: float) -> ParametricSubproblem:
    g = np.asarray(cnrs, dtype=float).ravel()
    tabs = _per_channel(tables, g.size)
    zeros = np.zeros(g.size)
    infs = np.full(g.size, np.inf)
    ones = np.ones(g.size)

    def solve(lam):
        a = mercury_allocate(tabs, g, lam, mu)
        slope = np.array([t.mmse_at(x) for t, x in zip(tabs, g * a.powers)])
        return SubproblemSolution(
            lam, a.powers, a.sum_rate, mu + a.sum_power,
            grad_f1=g * slope, grad_f2=ones, lower=zeros, upper=infs,
            extra={"allocation": a},
        )

    return ParametricSubproblem(solve, name="mercury")


def eval_F_mmse(tables, cnrs, mu: float, lam: float) -> tuple[float, MercuryAllocation]:
    """``F(lam) = sum r_i(gamma_i p_i) - lam*(mu + sum p_i)`` under mercury/water-filling."""
    if not mu > 0:
        raise DomainError("mu must be positive")
    a = mercury_allocate(tables, cnrs, lam, mu)
    return a.sum_rate - lam * (mu + a.sum_power), a


def solve_mmse_ee(
    tables, cnrs, mu: float, tol: float = DEFAULT_TOL, max_iter: int = 100
) -> tuple[DinkelbachTrace, MercuryAllocation]:
    """Maximize EE for the given inputs with Dinkelbach on :func:`eval_F_mmse`.

    An input that carries no information yields ``EE = 0`` with zero power.
    """
    if not mu > 0:
        raise DomainError("mu must be positive")
    g = np.asarray(cnrs, dtype=float).ravel()
    sub = mercury_subproblem(tables, g, mu)
    gmax = float(g.max()) if g.size else 0.0
    lam0 = ratio_start(sub, 0.5 * gmax) if gmax > 0 else 0.0
    trace = dinkelbach(sub, lam0, tol, max_iter)
    return trace, trace.solution.extra["allocation"]


_HEADER = "# eeopt-mmse-table v{version}"


def save_table(table: MmseTable, path) -> None:
    """Write a table as plain text.

    Layout::

        # eeopt-mmse-table v1
        # label: 16-qam
        # order: 16
        # rho_max: 10000
        # n_points: 513
        # columns: rho mmse log_mmse rate
        <rho> <mmse> <log_mmse> <rate>      (one row per sample, %.17g)

    The output is a pure function of the table, so rebuilding a table with
    the same parameters reproduces the file byte for byte.
    """
    lines = [
        _HEADER.format(version=TABLE_FORMAT_VERSION),
        f"# label: {table.label}",
        f"# order: {table.order}",
        f"# rho_max: {table.rho_max:.17g}",
        f"# n_points: {table.rho.size}",
        "# columns: rho mmse log_mmse rate",
    ]
    for row in zip(table.rho, table.mmse, table.log_mmse, table.rate):
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_table(path) -> MmseTable:
    """Read a table written by :func:`save_table`."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != _HEADER.format(version=TABLE_FORMAT_VERSION):
        raise DomainError(f"{path}: not an eeopt MMSE table (v{TABLE_FORMAT_VERSION})")
    meta = {}
    rows = []
    for line in text[1:]:
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 4 or data.shape[0] != int(meta.get("n_points", -1)):
        raise DomainError(f"{path}: malformed table body")
    return MmseTable(meta["label"], int(meta["order"]), *data.T)
