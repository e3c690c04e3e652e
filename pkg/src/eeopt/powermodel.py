"""Hardware power models mapped onto the per-Hz solver form.

Every model here has total consumed power that is affine in the radiated
power ``P_t = B * p``::

    P_total = B * (mu + p) / k

for a model-specific positive ``k``. The solvers only need ``mu`` (W/Hz);
``k`` turns their EE in nat/s/Hz per W/Hz into bits per Joule through
``conversion = log2(e) * k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .exceptions import DomainError

__all__ = [
    "LOG2E",
    "MuScale",
    "CuiLinkModel",
    "GenericBsModel",
    "MacroBsModel",
    "to_mu_scale",
    "ee_bits_per_joule",
    "total_bs_power",
    "dbm_per_hz_to_watts",
]

LOG2E = 1.0 / math.log(2.0)


class MuScale(NamedTuple):
    """Solver-facing summary of a power model.

    Attributes
    ----------
    mu : float
        Static power per Hz as seen at the PA output, W/Hz.
    scale : float
        Supply and cooling factor ``C`` of the model (1 when it has none).
    conversion : float
        Bits/Joule per unit of solver EE.
    """

    mu: float
    scale: float
    conversion: float


def dbm_per_hz_to_watts(dbm: float) -> float:
    """``-104.5`` dBm/Hz -> W/Hz."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise DomainError(f"{k} must be positive, got {v!r}")


def _check_nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise DomainError(f"{k} must be nonnegative, got {v!r}")


@dataclass(frozen=True)
class CuiLinkModel:
    """Transmitter with a backed-off PA and fixed circuit blocks.

    ``P_PA = (xi/eta) * P_t`` and ``P_ct`` is the sum of mixer, synthesizer,
    filter and DAC power. ``W_c`` is the subchannel bandwidth; ``T_c`` the
    coherence time (it cancels in the EE).
    """

    xi: float = 1.0
    eta: float = 1.0
    p_mix: float = 0.0
    p_syn: float = 0.0
    p_filt: float = 0.0
    p_dac: float = 0.0
    w_c: float = 1.0
    t_c: float = 1.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise DomainError("drain efficiency must lie in (0, 1]")
        if not self.xi >= 1:
            raise DomainError("output backoff must be >= 1")
        _check_nonneg(p_mix=self.p_mix, p_syn=self.p_syn, p_filt=self.p_filt, p_dac=self.p_dac)
        _check_positive(w_c=self.w_c, t_c=self.t_c)

    @property
    def p_ct(self) -> float:
        return self.p_mix + self.p_syn + self.p_filt + self.p_dac

    @property
    def bandwidth(self) -> float:
        return self.w_c

    def total_power(self, P_t: float) -> float:
        """``P_ct + (xi/eta) P_t`` in W."""
        return self.p_ct + self.xi / self.eta * P_t

    def mu_scale(self) -> MuScale:
        k = self.eta / self.xi
        return MuScale(k * self.p_ct / self.w_c, 1.0, LOG2E * k)


@dataclass(frozen=True)
class GenericBsModel:
    """Base station with per-antenna RF chains, supply and cooling losses.

    ``P_tot = (P_t/eta_pa + n_a*p_c + p_sta) / (eta_ps*(1 - eta_c))``.
    Defaults are the simulation constants for a 200 kHz link.
    """

    n_a: int = 1
    p_c: float = 0.0
    p_sta: float = 20.0
    eta_pa: float = 0.35
    eta_ps: float = 0.9
    eta_c: float = 0.95
    bandwidth: float = 200e3

    def __post_init__(self):
        if int(self.n_a) != self.n_a or self.n_a < 1:
            raise DomainError("antenna count must be a positive integer")
        if not (0 < self.eta_pa <= 1 and 0 < self.eta_ps <= 1):
            raise DomainError("PA and supply efficiencies must lie in (0, 1]")
        if not 0 <= self.eta_c < 1:
            raise DomainError("cooling loss must lie in [0, 1)")
        _check_nonneg(p_c=self.p_c, p_sta=self.p_sta)
        _check_positive(bandwidth=self.bandwidth)

    @property
    def C(self) -> float:
        return self.eta_ps * (1.0 - self.eta_c)

    def total_power(self, P_t: float) -> float:
        return (P_t / self.eta_pa + self.n_a * self.p_c + self.p_sta) / self.C

    def mu_scale(self) -> MuScale:
        mu = self.eta_pa * (self.n_a * self.p_c + self.p_sta) / self.bandwidth
        return MuScale(mu, self.C, LOG2E * self.C * self.eta_pa)


@dataclass(frozen=True)
class MacroBsModel:
    """Sectorized macro base station with linear PA model.

    ``P_BS = n_sector*n_pa_per_sector*(P_TX/mu_pa + p_sp)*(1 + c_c)*(1 + c_psbb)``.
    No defaults are published for these parameters; the values below are
    placeholders for examples only.
    """

    n_sector: int = 1
    n_pa_per_sector: int = 1
    p_sp: float = 10.0
    mu_pa: float = 0.3
    c_c: float = 0.0
    c_psbb: float = 0.0
    bandwidth: float = 200e3

    def __post_init__(self):
        for name in ("n_sector", "n_pa_per_sector"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer")
        if not 0 < self.mu_pa <= 1:
            raise DomainError("PA efficiency must lie in (0, 1]")
        _check_nonneg(p_sp=self.p_sp, c_c=self.c_c, c_psbb=self.c_psbb)
        _check_positive(bandwidth=self.bandwidth)

    @property
    def C(self) -> float:
        return self.n_sector * self.n_pa_per_sector * (1.0 + self.c_c) * (1.0 + self.c_psbb)

    def total_power(self, P_t: float) -> float:
        return self.C * (P_t / self.mu_pa + self.p_sp)

    def mu_scale(self) -> MuScale:
        mu = self.p_sp * self.mu_pa / self.bandwidth
        return MuScale(mu, self.C, LOG2E * self.mu_pa / self.C)


def to_mu_scale(model) -> MuScale:
    """``(mu, scale, conversion)`` of a power model.

    >>> to_mu_scale(GenericBsModel()).mu
    3.5e-05
    """
    return model.mu_scale()


def ee_bits_per_joule(model, solver_ee: float) -> float:
    """Convert EE in nats per unit of ``mu + p`` to bits per Joule."""
    if not solver_ee >= 0:
        raise DomainError("solver EE must be nonnegative")
    return model.mu_scale().conversion * solver_ee


def total_bs_power(model, P_t: float) -> float:
    """Total consumed power in W for radiated power ``P_t`` in W."""
    if not P_t >= 0:
        raise DomainError("transmit power must be nonnegative")
    return model.total_power(P_t)
