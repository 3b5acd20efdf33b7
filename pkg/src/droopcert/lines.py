"""Dynamic line model, uncertainty weight, and line bound extraction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .freqresp import F_BASE, RationalTransferFunction, hz_to_pu, pu_to_hz

BISECTION_TOL = 1e-9


@dataclass(frozen=True)
class LineParams:
    ell: float
    rho: float = 0.1
    V_n_star: float = 1.0
    V_k_star: float = 1.0
    omega0: float = 1.0

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("line inductance must be positive")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if not (self.V_n_star > 0 and self.V_k_star > 0):
            raise ValueError("nominal voltages must be positive")


@dataclass(frozen=True)
class UncertaintyWeight:
    beta: float = 0.0
    omega_delta: float = 1.0  # per unit

    def __post_init__(self):
        if self.beta < 0 or not self.omega_delta > 0:
            raise ValueError("invalid uncertainty weight")


@dataclass(frozen=True)
class LineBounds:
    rho: float
    omega0: float
    mu0: float
    mu_hat: float
    eps_l: float
    f_eps: float
    delta_eps: float  # -angle(mu) at f_eps, rad
    delta_l: float
    f_delta: float
    nu_l: float
    f_nu: float

    def to_dict(self) -> dict:
        return asdict(self)


def mu_tf(rho: float, omega0: float = 1.0) -> RationalTransferFunction:
    return RationalTransferFunction((1.0,), (omega0**2 + rho**2, 2.0 * rho, 1.0))


def line_mu(rho: float, omega0: float, f_p, f_base: float = F_BASE):
    """Normalized line response at ``f_p`` Hz (scalar or array)."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    s = 1j * hz_to_pu(f_p, f_base)
    return 1.0 / (s * s + 2.0 * rho * s + omega0**2 + rho**2)


def mu_dc(rho: float, omega0: float = 1.0) -> float:
    return 1.0 / (omega0**2 + rho**2)


def mu_peak_nominal(rho: float, omega0: float = 1.0) -> float:
    """``|mu(j omega0)|``; equals ``1/(rho*sqrt(rho^2 + 4 omega0^2))``."""
    if rho == 0:
        return math.inf
    return 1.0 / (rho * math.sqrt(rho**2 + 4.0 * omega0**2))


def mu_peak_true(rho: float, omega0: float = 1.0) -> float:
    """Supremum of ``|mu|`` over the imaginary axis."""
    if rho == 0:
        return math.inf
    if rho >= omega0:
        return mu_dc(rho, omega0)
    return 1.0 / (2.0 * rho * omega0)


def line_kappa(params: LineParams) -> float:
    return params.omega0 * params.V_n_star * params.V_k_star / params.ell


def line_power_matrix(params: LineParams, f_p: float, f_base: float = F_BASE) -> np.ndarray:
    """Map ``(dtheta_nk, dV_nk)`` to ``(dp_nk, dq_nk)`` at ``f_p`` Hz."""
    s = 1j * hz_to_pu(f_p, f_base)
    kmu = line_kappa(params) * line_mu(params.rho, params.omega0, f_p, f_base)
    rs = params.rho + s
    return kmu * np.array(
        [[1.0, rs / (params.omega0 * params.V_k_star)], [rs / params.omega0, 1.0 / params.V_k_star]],
        dtype=complex,
    )


def uncertainty_weight(w: UncertaintyWeight, f_p, f_base: float = F_BASE):
    s = 1j * hz_to_pu(f_p, f_base)
    return w.beta * w.omega_delta * s / (s + w.omega_delta)


def weight_tf(w: UncertaintyWeight) -> RationalTransferFunction:
    return RationalTransferFunction((0.0, w.beta * w.omega_delta), (w.omega_delta, 1.0))


def default_weight(rho: float, omega0: float = 1.0, share: float = 0.2, omega_delta: float = 1.0) -> UncertaintyWeight:
    """Weight with ``|W(j omega0)|`` equal to ``share`` of the nominal peak."""
    target = share * mu_peak_nominal(rho, omega0)
    w_at = omega0 / math.hypot(omega0, omega_delta)
    return UncertaintyWeight(beta=target / (omega_delta * w_at), omega_delta=omega_delta)


def _bisect(fun, lo: float, hi: float, tol: float = BISECTION_TOL) -> float:
    """Root of ``fun`` on ``[lo, hi]`` given a sign change."""
    flo, fhi = fun(lo), fun(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("no sign change on bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _mu_pu(rho, omega0, w):
    s = 1j * w
    return 1.0 / (s * s + 2.0 * rho * s + omega0**2 + rho**2)


def _mu_phase(rho, omega0, w):
    # continuous phase of mu on the positive axis, in (-pi, 0]
    return -math.atan2(2.0 * rho * w, omega0**2 + rho**2 - w * w)


def freq_for_gain(rho: float, omega0: float, level: float, f_base: float = F_BASE) -> float:
    """Lowest frequency (Hz) on the rising segment where ``|mu| = level``."""
    mu0 = mu_dc(rho, omega0)
    if rho >= omega0 or level <= mu0:
        raise ValueError("gain level not reachable on a rising segment")
    w_peak = math.sqrt(omega0**2 - rho**2)
    if level >= mu_peak_true(rho, omega0):
        raise ValueError("gain level exceeds the line resonance peak")
    w = _bisect(lambda x: abs(_mu_pu(rho, omega0, x)) - level, 0.0, w_peak)
    return pu_to_hz(w, f_base)


def freq_for_phase(rho: float, omega0: float, phase: float, f_base: float = F_BASE) -> float:
    """Frequency (Hz) at which ``angle(mu) = phase`` with ``phase in (-pi, 0)``."""
    if not (-math.pi < phase < 0):
        raise ValueError("phase threshold must lie in (-pi, 0)")
    if rho == 0:
        raise ValueError("lossless line has a phase jump, thresholds undefined")
    hi = omega0
    while _mu_phase(rho, omega0, hi) > phase:
        hi *= 2.0
    w = _bisect(lambda x: _mu_phase(rho, omega0, x) - phase, 0.0, hi)
    return pu_to_hz(w, f_base)


def extract_line_bounds(rho: float, omega0: float = 1.0, eps_l: float = 0.1, delta_l: float = math.radians(4.5),
                        nu_l: float = math.radians(24.5), f_base: float = F_BASE) -> LineBounds:
    """Compute the DC and peak gain and the break frequencies of the line envelope."""
    if not (eps_l > 0 and delta_l > 0 and nu_l > 0):
        raise ValueError("eps_l, delta_l and nu_l must be positive")
    if nu_l >= math.pi or delta_l >= math.pi:
        raise ValueError("phase thresholds must be below pi")
    mu0 = mu_dc(rho, omega0)
    f_eps = freq_for_gain(rho, omega0, mu0 + eps_l, f_base)
    delta_eps = -_mu_phase(rho, omega0, hz_to_pu(f_eps, f_base))
    f_delta = freq_for_phase(rho, omega0, -delta_l, f_base)
    f_nu = freq_for_phase(rho, omega0, nu_l - math.pi, f_base)
    return LineBounds(
        rho=rho,
        omega0=omega0,
        mu0=mu0,
        mu_hat=mu_peak_nominal(rho, omega0),
        eps_l=eps_l,
        f_eps=f_eps,
        delta_eps=delta_eps,
        delta_l=delta_l,
        f_delta=f_delta,
        nu_l=nu_l,
        f_nu=f_nu,
    )


def eps_for_frequency(rho: float, omega0: float, f_hz: float, f_base: float = F_BASE) -> float:
    """Inverse utility: gain tolerance needed for the bound to hold up to ``f_hz``."""
    w = hz_to_pu(f_hz, f_base)
    if rho < omega0 and w >= math.sqrt(omega0**2 - rho**2):
        return mu_peak_true(rho, omega0) - mu_dc(rho, omega0)
    return max(abs(_mu_pu(rho, omega0, w)) - mu_dc(rho, omega0), 0.0)


def line_mu_perturbed(rho: float, omega0: float, f_p, delta, w: UncertaintyWeight, f_base: float = F_BASE):
    """Line response with additive uncertainty ``mu + delta * W``; ``|delta| <= 1``."""
    delta = np.asarray(delta, dtype=complex)
    if np.any(np.abs(delta) > 1.0 + 1e-12):
        raise ValueError("admissible perturbations satisfy |delta| <= 1")
    return line_mu(rho, omega0, f_p, f_base) + delta * uncertainty_weight(w, f_p, f_base)
