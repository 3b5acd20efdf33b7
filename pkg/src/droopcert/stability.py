"""Decentralized half-plane stability certificate on sampled droop data.

For each positive probe frequency the bus loop response
``h = gamma/(psi*w) * mu(jw) * m_p(jw)`` must place ``z = j + h`` strictly
inside the half-plane ``Re{exp(j(alpha - pi/2)) z} > 0``.  Equivalently
``sin(alpha + arg z) > 0``, which gives one admissible interval of ``alpha``
per sample.  Negative frequencies contribute the mirror image half-plane
for the conjugate data, which is the same constraint, so positive data suffice.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import DroopDataset, fmt
from .freqresp import F_BASE, RationalTransferFunction, hz_to_pu, loglog_slope
from .lines import LineParams, UncertaintyWeight, line_mu, mu_tf, uncertainty_weight

HALF_PI = 0.5 * math.pi
MIN_POINTS_PER_DECADE = 10
GROWTH_TOL = 0.05  # log-log slope treated as flat


@dataclass(frozen=True)
class NetworkEnvelope:
    ell_min: float
    e_max: int
    V_max: float = 1.0
    omega0: float = 1.0
    rho: float = 0.1
    uncertainty: UncertaintyWeight = field(default_factory=UncertaintyWeight)

    def __post_init__(self):
        if not self.ell_min > 0:
            raise ValueError("ell_min must be positive")
        if self.e_max < 1:
            raise ValueError("e_max must be at least 1")
        if not self.V_max > 0:
            raise ValueError("V_max must be positive")


@dataclass(frozen=True)
class BusContext:
    gamma: float
    psi: float = 1.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.psi > 0):
            raise ValueError("gamma and psi must be positive")


def gamma_bus(lines: list[LineParams]) -> float:
    """Coupling strength ``2 * sum(omega0 * V_n * V_k / ell)`` of one bus."""
    if not lines:
        raise ValueError("bus has no incident lines")
    return 2.0 * sum(l.omega0 * l.V_n_star * l.V_k_star / l.ell for l in lines)


def gamma_bar(env: NetworkEnvelope) -> float:
    return 2.0 * env.e_max * env.omega0 * env.V_max**2 / env.ell_min


def bus_loop_response(f_p: float, m_p: complex, ctx: BusContext, rho: float, omega0: float = 1.0,
                      f_base: float = F_BASE, line_model: str = "dynamic") -> complex:
    """Bus loop response at ``f_p`` Hz.

    ``line_model="static"`` replaces the line by its DC gain, the quasi-steady
    state comparison.
    """
    if f_p == 0:
        raise ValueError("f_p = 0 is excluded; the loop has a pole at the origin")
    w = abs(hz_to_pu(f_p, f_base))
    if line_model == "static":
        mu = 1.0 / (omega0**2 + rho**2)
    else:
        mu = line_mu(rho, omega0, abs(f_p), f_base)
    h = ctx.gamma / (ctx.psi * w) * mu * m_p
    return complex(h) if f_p > 0 else complex(np.conj(h))


def robust_radius(f_p: float, m_p: complex, ctx: BusContext, w: UncertaintyWeight, f_base: float = F_BASE) -> float:
    wp = abs(hz_to_pu(f_p, f_base))
    return float(ctx.gamma / (ctx.psi * wp) * abs(uncertainty_weight(w, abs(f_p), f_base)) * abs(m_p))


def sample_interval(h: complex, radius: float = 0.0, negative: bool = False):
    """Admissible ``(alpha_lo, alpha_hi)`` within ``[0, pi/2)`` for one sample, or None.

    ``negative`` marks a sample taken at a negative frequency, whose value is the
    conjugate of the positive one; the mirrored half-plane applies to it.
    """
    if negative:
        h = np.conj(h)
    z = 1j + complex(h)
    r = abs(z)
    if r == 0 or radius >= r:
        return None
    phi = math.atan2(z.imag, z.real)
    a = math.asin(radius / r) if radius > 0 else 0.0
    lo = max(0.0, -phi + a)
    hi = min(HALF_PI, math.pi - phi - a)
    if lo >= hi:
        return None
    return lo, hi


def intersect(intervals):
    lo, hi = 0.0, HALF_PI
    for iv in intervals:
        if iv is None:
            return None
        lo, hi = max(lo, iv[0]), min(hi, iv[1])
        if lo >= hi:
            return None
    return lo, hi


def alpha_feasible(h_samples) -> tuple[float, float] | None:
    """Intersection of per-sample admissible alpha intervals.

    ``h_samples`` is an iterable of ``(f_p, h)``; ``f_p < 0`` marks mirrored data.
    """
    return intersect(sample_interval(h, negative=f < 0) for f, h in h_samples)


def half_plane_margin(h: complex, alpha: float, radius: float = 0.0) -> float:
    """Signed distance of the disk around ``j + h`` from the half-plane boundary."""
    return float((np.exp(1j * (alpha - HALF_PI)) * (1j + h)).real - radius)


@dataclass
class CertificateResult:
    alpha_interval: tuple[float, float] | None
    per_freq: list[dict]
    robust: bool
    violations: list[tuple[float, str]]
    warnings: list[str] = field(default_factory=list)
    assumptions: list[str] = field(default_factory=list)
    gamma: float = 0.0
    psi: float = 1.0

    @property
    def feasible(self) -> bool:
        return self.alpha_interval is not None

    @property
    def alpha_suggested(self) -> float | None:
        if self.alpha_interval is None:
            return None
        return 0.5 * (self.alpha_interval[0] + self.alpha_interval[1])

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "robust": self.robust,
            "gamma": self.gamma,
            "psi": self.psi,
            "alpha_interval_rad": list(self.alpha_interval) if self.alpha_interval else None,
            "alpha_interval_deg": [math.degrees(a) for a in self.alpha_interval] if self.alpha_interval else None,
            "alpha_suggested_rad": self.alpha_suggested,
            "violations": [{"f_hz": f, "reason": r} for f, r in self.violations],
            "warnings": list(self.warnings),
            "assumptions": list(self.assumptions),
            "per_freq": [
                {
                    "f_hz": d["f_hz"],
                    "h": d["h"],
                    "radius": d["radius"],
                    "alpha_lo": d["interval"][0] if d["interval"] else None,
                    "alpha_hi": d["interval"][1] if d["interval"] else None,
                }
                for d in self.per_freq
            ],
        }

    def write_nyquist_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["f_hz", "h_re", "h_im", "radius"])
            for d in self.per_freq:
                w.writerow([fmt(d["f_hz"]), fmt(d["h"].real), fmt(d["h"].imag), fmt(d["radius"])])


def loop_poles_stable(m_p: RationalTransferFunction, rho: float, omega0: float = 1.0) -> bool:
    """Poles of ``mu * m_p`` strictly in the left half-plane (analytic models only)."""
    return (mu_tf(rho, omega0) * m_p).is_stable()


def certify_unit(dataset: DroopDataset, env: NetworkEnvelope, ctx: BusContext | None = None, robust: bool = False,
                 min_points_per_decade: float = MIN_POINTS_PER_DECADE, m_p_model: RationalTransferFunction | None = None,
                 psi: float = 1.0) -> CertificateResult:
    """Check the half-plane condition for one unit against a network envelope.

    ``ctx`` defaults to the envelope bound ``gamma_bar`` with rating ``psi``.
    With ``robust`` each sample's Nyquist point is inflated to a disk of
    radius :func:`robust_radius` and the whole disk must satisfy the condition.
    """
    if ctx is None:
        ctx = BusContext(gamma_bar(env), psi)
    samples = dataset.valid_samples()
    if len(samples) < 2:
        raise ValueError("dataset too sparse for certification")
    f = np.array([s.f_hz for s in samples])
    ppd = (len(f) - 1) / math.log10(f[-1] / f[0])
    if ppd < min_points_per_decade:
        raise ValueError(f"dataset too sparse: {ppd:.1f} points/decade < {min_points_per_decade}")
    f_base = dataset.f_base_hz
    per_freq = []
    violations: list[tuple[float, str]] = []
    warnings: list[str] = []
    intervals = []
    for s in samples:
        h = bus_loop_response(s.f_hz, s.m_p, ctx, env.rho, env.omega0, f_base)
        r = robust_radius(s.f_hz, s.m_p, ctx, env.uncertainty, f_base) if robust else 0.0
        iv = sample_interval(h, r)
        per_freq.append({"f_hz": s.f_hz, "h": h, "radius": r, "interval": iv})
        if iv is None:
            violations.append((s.f_hz, "uncertainty disk crosses half-plane boundary for every alpha" if r > 0
                               else "no alpha in [0, pi/2) places the sample in the half-plane"))
        intervals.append(iv)

    # low-frequency limit: h -> infinity along angle(mu0 * m_p(0))
    m0 = samples[0].m_p
    phase0 = math.atan2(m0.imag, m0.real)
    if abs(phase0) >= HALF_PI:
        violations.append((0.0, "low-frequency limit: droop phase outside (-90, 90) deg"))
        intervals.append(None)
    else:
        intervals.append((max(0.0, -phase0), min(HALF_PI, math.pi - phase0)))

    # high-frequency limit from the last decade of |h| and of the disk radius
    top = f >= f[-1] / 10.0
    if top.sum() >= 2 and f[-1] / f[top][0] >= 5.0:
        hs = np.array([d["h"] for d in per_freq])[top]
        slope = loglog_slope(f[top], hs)
        if slope > GROWTH_TOL:
            # |h| -> inf along its last phase; the limiting cone must still be admissible
            ang = math.atan2(hs[-1].imag, hs[-1].real)
            iv = (max(0.0, -ang), min(HALF_PI, math.pi - ang))
            if iv[0] >= iv[1]:
                violations.append((math.inf, f"high-frequency limit: |h| grows (slope {slope:.2f}) in a non-dissipative direction"))
                iv = None
            intervals.append(iv)
        if robust:
            rad = np.array([d["radius"] for d in per_freq])[top]
            if np.all(rad > 0):
                rslope = loglog_slope(f[top], rad)
                if rslope > GROWTH_TOL:
                    violations.append((math.inf, f"high-frequency limit: uncertainty radius grows (slope {rslope:.2f})"))
                    intervals.append(None)
    else:
        warnings.append("grid does not span the top decade; high-frequency limit unchecked")

    alpha = intersect(intervals)
    if alpha is None and not violations:
        worst = max((d for d in per_freq), key=lambda d: d["interval"][0])
        violations.append((worst["f_hz"], "no common alpha across frequencies"))
    if violations:
        alpha = None

    # narrow margins between samples are flagged but never certified around
    for a, b in zip(per_freq, per_freq[1:]):
        if a["interval"] and b["interval"] and alpha is not None:
            mid_h = 0.5 * (a["h"] + b["h"])
            if half_plane_margin(mid_h, 0.5 * (alpha[0] + alpha[1]), 0.5 * (a["radius"] + b["radius"])) <= 0:
                warnings.append(f"interpolated sample between {a['f_hz']:.4g} and {b['f_hz']:.4g} Hz violates the condition")

    assumptions = []
    if m_p_model is not None:
        ok = loop_poles_stable(m_p_model, env.rho, env.omega0)
        assumptions.append(f"poles of mu*m_p in open left half-plane: {'verified' if ok else 'VIOLATED'}")
        if not ok:
            violations.append((math.nan, "precondition violated: unstable poles in mu*m_p"))
            alpha = None
    else:
        assumptions.append("poles of mu*m_p in open left half-plane: assumed (measured data)")

    return CertificateResult(alpha, per_freq, robust, violations, warnings, assumptions, ctx.gamma, ctx.psi)
