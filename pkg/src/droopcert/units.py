"""Analytic reference models of grid-forming, VSM and grid-following units."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .freqresp import OMEGA_BASE, RationalTransferFunction

ZERO_TF = RationalTransferFunction((0.0,), (1.0,))


class UnitKind(str, Enum):
    GFM_DROOP = "GfmDroop"
    VSM = "Vsm"
    GFL_PLL = "GflPll"
    CONSTANT = "Constant"


@dataclass(frozen=True)
class GfmDroopParams:
    m_p0: float
    tau: float  # seconds

    def __post_init__(self):
        if not (self.m_p0 > 0 and self.tau > 0):
            raise ValueError("GFM droop parameters must be positive")


@dataclass(frozen=True)
class VsmParams:
    H: float  # seconds
    D: float

    def __post_init__(self):
        if not (self.H > 0 and self.D > 0):
            raise ValueError("VSM parameters must be positive")


@dataclass(frozen=True)
class GflPllParams:
    """SRF-PLL grid-following unit.  ``k_p``, ``k_i`` are per-unit PLL gains."""

    k_p: float = 0.2357
    k_i: float = 0.02778
    tau_d: float = 0.01  # seconds
    D: float = 20.0

    def __post_init__(self):
        if not all(v > 0 for v in (self.k_p, self.k_i, self.tau_d, self.D)):
            raise ValueError("GFL parameters must be strictly positive")


@dataclass(frozen=True)
class ConstantParams:
    m_p0: float

    def __post_init__(self):
        if not self.m_p0 > 0:
            raise ValueError("droop constant must be positive")


@dataclass(frozen=True)
class QvDroopParams:
    m_q0: float = 0.05
    tau_q: float = 0.05  # seconds


def gfm_droop_tf(params: GfmDroopParams) -> RationalTransferFunction:
    """``m_p0 / (tau*s + 1)`` with the time constant converted to per unit."""
    return RationalTransferFunction((params.m_p0,), (1.0, params.tau * OMEGA_BASE))


def vsm_tf(params: VsmParams) -> RationalTransferFunction:
    return RationalTransferFunction((1.0,), (params.D, 2.0 * params.H * OMEGA_BASE))


def gfl_pll_parts(params: GflPllParams):
    """Return ``(g_pll, g_d)`` such that ``dp = -g_d*g_pll*domega``."""
    tau_d = params.tau_d * OMEGA_BASE
    g_pll = RationalTransferFunction((params.k_i, params.k_p), (params.k_i, params.k_p, 1.0))
    g_d = RationalTransferFunction((params.D,), (1.0, tau_d))
    return g_pll, g_d


def gfl_srf_pll_tf(params: GflPllParams) -> RationalTransferFunction:
    """Improper droop response of an SRF-PLL unit, relative degree -2."""
    g_pll, g_d = gfl_pll_parts(params)
    return (g_pll * g_d).inverse()


def qv_droop_tf(params: QvDroopParams) -> RationalTransferFunction:
    return RationalTransferFunction((params.m_q0,), (1.0, params.tau_q * OMEGA_BASE))


@dataclass(frozen=True)
class UnitModel:
    """Dynamic droop matrix ``[[m_p, zeta_q], [zeta_p, m_q]]`` plus rating."""

    m_p: RationalTransferFunction
    m_q: RationalTransferFunction = field(default_factory=lambda: qv_droop_tf(QvDroopParams()))
    zeta_p: RationalTransferFunction = ZERO_TF
    zeta_q: RationalTransferFunction = ZERO_TF
    psi: float = 1.0
    name: str = "unit"

    def __post_init__(self):
        if not self.psi > 0:
            raise ValueError("unit rating psi must be positive")

    @property
    def has_cross_coupling(self) -> bool:
        return not (self.zeta_p.is_zero and self.zeta_q.is_zero)

    def matrix(self, s):
        return [[self.m_p(s), self.zeta_q(s)], [self.zeta_p(s), self.m_q(s)]]


_PARAM_TYPES = {
    UnitKind.GFM_DROOP: GfmDroopParams,
    UnitKind.VSM: VsmParams,
    UnitKind.GFL_PLL: GflPllParams,
    UnitKind.CONSTANT: ConstantParams,
}


def unit_droop_matrix(kind, params, psi: float = 1.0, qv: QvDroopParams | None = None,
                      zeta_p=None, zeta_q=None, name: str | None = None) -> UnitModel:
    """Assemble a :class:`UnitModel` for one of the reference unit kinds."""
    kind = UnitKind(kind)
    if not isinstance(params, _PARAM_TYPES[kind]):
        raise ValueError(f"{kind.value} expects {_PARAM_TYPES[kind].__name__}, got {type(params).__name__}")
    if kind is UnitKind.GFM_DROOP:
        m_p = gfm_droop_tf(params)
    elif kind is UnitKind.VSM:
        m_p = vsm_tf(params)
    elif kind is UnitKind.GFL_PLL:
        m_p = gfl_srf_pll_tf(params)
    else:
        m_p = RationalTransferFunction.constant(params.m_p0)
    return UnitModel(
        m_p=m_p,
        m_q=qv_droop_tf(qv or QvDroopParams()),
        zeta_p=zeta_p or ZERO_TF,
        zeta_q=zeta_q or ZERO_TF,
        psi=psi,
        name=name or kind.value,
    )


def params_from_dict(kind, d: dict):
    kind = UnitKind(kind)
    return _PARAM_TYPES[kind](**d)
