"""Bode-plot templates for the droop response, performance checks and
minimum network inductance formulas.

Gain ceilings in the templates grow linearly with the per-unit probe
frequency, so each segment stores a coefficient ``c`` and the ceiling at
``f`` Hz is ``c * f / f_base``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import DroopDataset, fmt
from .freqresp import F_BASE, hz_to_pu
from .lines import LineBounds, freq_for_gain, freq_for_phase, line_mu, mu_dc, mu_peak_true
from .stability import HALF_PI, BusContext

STRICT_MARGIN = 1e-6
TWO_PI = 2.0 * math.pi


class TemplateCase(str, Enum):
    LOW_GAIN = "LowGain"
    PASSIVE = "Passive"


@dataclass(frozen=True)
class Segment:
    """One frequency band of a template.

    ``gain_coef`` is the ceiling per unit of per-unit frequency (None for no
    gain bound).  Phase limits are in radians; ``None`` leaves phase free.
    The ``*_strict`` flags mark open bounds.
    """

    name: str
    f_lo: float
    f_hi: float
    gain_coef: float | None = None
    phase_min: float | None = None
    phase_max: float | None = None
    gain_strict: bool = False
    phase_min_strict: bool = False
    phase_max_strict: bool = False

    def contains(self, f: float) -> bool:
        # lower edge open, upper edge closed; a zero lower edge includes f > 0
        return self.f_lo < f <= self.f_hi

    def gain_max(self, f: float, f_base: float = F_BASE) -> float | None:
        if self.gain_coef is None:
            return None
        return self.gain_coef * hz_to_pu(f, f_base)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "f_lo": self.f_lo,
            "f_hi": self.f_hi,
            "gain_coef": self.gain_coef,
            "phase_min": self.phase_min,
            "phase_max": self.phase_max,
            "gain_strict": self.gain_strict,
            "phase_min_strict": self.phase_min_strict,
            "phase_max_strict": self.phase_max_strict,
        }


@dataclass(frozen=True)
class BoundTemplate:
    segments: tuple[Segment, ...]
    case: TemplateCase
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if a.f_hi != b.f_lo:
                raise ValueError("template segments must be contiguous")
        for s in self.segments:
            if s.f_lo > s.f_hi:
                raise ValueError(f"segment {s.name} has f_lo > f_hi")

    def segment_for(self, f: float) -> Segment | None:
        for s in self.segments:
            if s.contains(f):
                return s
        return None

    def to_dict(self) -> dict:
        return {"case": self.case.value, "params": dict(self.params), "segments": [s.to_dict() for s in self.segments]}


@dataclass
class SegmentResult:
    name: str
    gain_margin_db: float = math.inf
    phase_margin_deg: float = math.inf
    violations: list[float] = field(default_factory=list)
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "segment": self.name,
            "gain_margin_db": self.gain_margin_db,
            "phase_margin_deg": self.phase_margin_deg,
            "violating_f_hz": list(self.violations),
            "n_samples": self.n_samples,
        }


@dataclass
class ComplianceReport:
    per_segment: list[SegmentResult]
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(r.violations for r in self.per_segment)

    def segment(self, name: str) -> SegmentResult:
        for r in self.per_segment:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "per_segment": [r.to_dict() for r in self.per_segment], "warnings": list(self.warnings)}


def _wrap_into(phase: float, lo: float) -> float:
    """Representative of ``phase`` modulo 2*pi in ``[lo - pi, lo + pi)``."""
    return lo + ((phase - lo + math.pi) % TWO_PI) - math.pi


def _combined_phase(dataset: DroopDataset, bounds: LineBounds) -> tuple[np.ndarray, np.ndarray]:
    f = dataset.f_hz
    if len(f) == 0:
        raise ValueError("empty dataset")
    m_phase = np.unwrap(np.angle(dataset.m_p))
    mu_phase = np.unwrap(np.angle(line_mu(bounds.rho, bounds.omega0, f, dataset.f_base_hz)))
    return f, m_phase + mu_phase


def _first_crossing(f: np.ndarray, y: np.ndarray, level: float) -> float:
    above = y >= level
    idx = np.flatnonzero(above)
    if idx.size == 0:
        return math.inf
    i = int(idx[0])
    if i == 0:
        return float(f[0])
    if np.count_nonzero(np.diff(above.astype(int)) != 0) > 1:
        warnings.warn(f"combined phase crosses {math.degrees(level):.1f} deg more than once; using the lowest", stacklevel=3)
    # linear in log-frequency between the bracketing samples
    x0, x1 = math.log10(f[i - 1]), math.log10(f[i])
    t = (level - y[i - 1]) / (y[i] - y[i - 1])
    return float(10 ** (x0 + t * (x1 - x0)))


def boundary_freqs_low_gain(dataset: DroopDataset, bounds: LineBounds, alpha: float) -> tuple[float, float]:
    """Lowest frequencies where ``|angle(mu) + angle(m_p)|`` reaches ``alpha`` and ``pi/2``.

    Returns ``inf`` for a level the sampled data never reach.
    """
    f, ph = _combined_phase(dataset, bounds)
    a = np.abs(ph)
    return _first_crossing(f, a, alpha), _first_crossing(f, a, HALF_PI)


def prescribed_boundaries(bounds: LineBounds, alpha: float) -> tuple[float, float]:
    """Boundaries a constant real droop would produce, independent of the applicant."""
    f_alpha = freq_for_phase(bounds.rho, bounds.omega0, -alpha)
    f_dbl = freq_for_phase(bounds.rho, bounds.omega0, -HALF_PI)
    return f_alpha, f_dbl


def _effective_f_eps(bounds: LineBounds, delta_eps: float) -> float:
    # a smaller phase allowance than the line's own lag at f_eps shortens the band
    if delta_eps >= bounds.delta_eps:
        return bounds.f_eps
    return min(bounds.f_eps, freq_for_phase(bounds.rho, bounds.omega0, -delta_eps))


def _peak_covered(bounds: LineBounds) -> bool:
    # mu_hat is |mu(j omega0)|, slightly below the true resonance peak
    ok = bounds.mu_hat + bounds.eps_l >= mu_peak_true(bounds.rho, bounds.omega0)
    if not ok:
        warnings.warn("mu_hat + eps_l is below the line resonance peak; high-frequency ceilings are optimistic",
                      stacklevel=3)
    return ok


def low_gain_template(bounds: LineBounds, ctx: BusContext, alpha: float, f_alpha: float, f_dblprime: float,
                      delta_eps: float | None = None) -> BoundTemplate:
    """Template for small ``alpha``: phase window at low frequency, gain ceilings above.

    ``f_dblprime`` is capped at ``f_eps`` and ``f_alpha`` at ``f_dblprime`` so that
    the line envelope used in each band actually holds there.
    """
    if not 0 < alpha < HALF_PI:
        raise ValueError("alpha must lie in (0, pi/2)")
    if f_alpha > f_dblprime:
        raise ValueError("f_alpha must not exceed f_dblprime")
    d_eps = bounds.delta_eps if delta_eps is None else delta_eps
    f_eps = _effective_f_eps(bounds, d_eps)
    f_dbl = min(f_dblprime, f_eps)
    f_a = min(f_alpha, f_dbl)
    k = ctx.psi / ctx.gamma
    lo_gain = k / (bounds.mu0 + bounds.eps_l)
    hi_gain = k / (bounds.mu_hat + bounds.eps_l)
    ca = math.cos(alpha)
    segs = [
        Segment("R1", 0.0, f_a, None, -alpha + d_eps, alpha),
        Segment("R2", f_a, f_dbl, lo_gain, -HALF_PI + d_eps, HALF_PI, gain_strict=True),
        # strict so that samples on the ceiling keep a positive half-plane margin
        Segment("R3a", f_dbl, f_eps, ca * lo_gain, gain_strict=True),
        Segment("R3b", f_eps, math.inf, ca * hi_gain, gain_strict=True),
    ]
    params = {
        "alpha": alpha, "delta_eps": d_eps, "eps_l": bounds.eps_l, "gamma": ctx.gamma, "psi": ctx.psi,
        "f_alpha": f_a, "f_dblprime": f_dbl, "f_eps": f_eps, "phase_allowance": "delta_eps",
        "peak_covered": _peak_covered(bounds),
        "line": bounds.to_dict(),
    }
    return BoundTemplate(tuple(segs), TemplateCase.LOW_GAIN, params)


def passive_template(bounds: LineBounds, ctx: BusContext, alpha: float) -> BoundTemplate:
    """Template for ``alpha`` near ``pi/2``: phase lead compensates the line's lag."""
    if not 0 < alpha < HALF_PI:
        raise ValueError("alpha must lie in (0, pi/2)")
    d_l, nu_l = bounds.delta_l, bounds.nu_l
    gain = ctx.psi / (ctx.gamma * (bounds.mu_hat + bounds.eps_l))
    segs = [
        Segment("R1", 0.0, bounds.f_delta, None, -alpha + d_l, alpha),
        Segment("R2a", bounds.f_delta, bounds.f_nu, gain, HALF_PI - nu_l, HALF_PI + d_l,
                gain_strict=True, phase_min_strict=True),
        Segment("R2b", bounds.f_nu, math.inf, gain, HALF_PI, 1.5 * math.pi - nu_l,
                gain_strict=True, phase_min_strict=True),
    ]
    params = {
        "alpha": alpha, "delta_l": d_l, "nu_l": nu_l, "eps_l": bounds.eps_l, "gamma": ctx.gamma, "psi": ctx.psi,
        "phase_allowance": "delta_l", "line": bounds.to_dict(), "peak_covered": _peak_covered(bounds),
    }
    return BoundTemplate(tuple(segs), TemplateCase.PASSIVE, params)


def _check_sample(seg: Segment, f: float, m: complex, res: SegmentResult, margin: float, f_base: float) -> None:
    ok = True
    g = abs(m)
    gmax = seg.gain_max(f, f_base)
    if gmax is not None:
        gm = 20 * math.log10(gmax / g) if g > 0 else math.inf
        res.gain_margin_db = min(res.gain_margin_db, gm)
        ok &= g < gmax - margin if seg.gain_strict else g <= gmax
    if seg.phase_min is not None:
        ph = _wrap_into(math.atan2(m.imag, m.real), 0.5 * (seg.phase_min + seg.phase_max))
        pm = min(ph - seg.phase_min, seg.phase_max - ph)
        res.phase_margin_deg = min(res.phase_margin_deg, math.degrees(pm))
        ok &= ph > seg.phase_min + margin if seg.phase_min_strict else ph >= seg.phase_min
        ok &= ph < seg.phase_max - margin if seg.phase_max_strict else ph <= seg.phase_max
    if not ok:
        res.violations.append(f)


def check_against_template(dataset: DroopDataset, template: BoundTemplate, margin: float = STRICT_MARGIN) -> ComplianceReport:
    samples = dataset.valid_samples()
    if not samples:
        raise ValueError("empty dataset")
    results = {s.name: SegmentResult(s.name) for s in template.segments}
    warn = []
    for s in samples:
        seg = template.segment_for(s.f_hz)
        if seg is None:
            warn.append(f"sample at {s.f_hz:.6g} Hz outside all template segments")
            continue
        res = results[seg.name]
        res.n_samples += 1
        _check_sample(seg, s.f_hz, s.m_p, res, margin, dataset.f_base_hz)
    return ComplianceReport([results[s.name] for s in template.segments], warn)


# performance specification

def cutoff_frequency(H: float, D: float, mode: str = "d_over_h") -> float:
    """Inertia cut-off frequency in Hz.

    ``"d_over_h"`` uses ``pi*D/H``; ``"pole"`` uses the VSM pole ``D/(4*pi*H)``.
    """
    if not (H > 0 and D > 0):
        raise ValueError("H and D must be positive")
    if mode == "d_over_h":
        return math.pi * D / H
    if mode == "pole":
        return D / (4.0 * math.pi * H)
    raise ValueError(f"unknown cut-off mode {mode!r}")


@dataclass(frozen=True)
class PerfSpec:
    m_p0: float = 0.05
    eps_d: float = 0.005
    delta_d: float = math.radians(10.0)
    f_d: float = 0.1
    m_bar_p: float = 0.1
    f_c: float = 1.0
    f_t: float | None = None  # upper edge of the transient window, defaults to f_c
    slope_tol: float = 0.1

    def __post_init__(self):
        for name in ("m_p0", "eps_d", "delta_d", "f_d", "m_bar_p", "f_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eps_d >= self.m_p0:
            raise ValueError("eps_d must be smaller than m_p0")

    @property
    def transient_edge(self) -> float:
        return self.f_c if self.f_t is None else self.f_t


def perf_check(dataset: DroopDataset, spec: PerfSpec) -> dict[str, ComplianceReport]:
    """Steady-state droop, transient droop and inertia checks.

    Returns sub-reports keyed ``"steady_state"``, ``"transient"`` and ``"inertia"``.
    """
    f = dataset.f_hz
    m = dataset.m_p
    if len(f) == 0:
        raise ValueError("empty dataset")
    above = f > spec.f_c
    if not above.any() or f[above][-1] / f[above][0] < 10.0 or above.sum() < 3:
        raise ValueError("need at least one decade of samples above f_c for the slope fit")

    ss = SegmentResult("steady_state")
    for fi, mi in zip(f, m):
        if fi > spec.f_d:
            continue
        ss.n_samples += 1
        g, ph = abs(mi), abs(math.atan2(mi.imag, mi.real))
        ss.gain_margin_db = min(ss.gain_margin_db, 20 * math.log10((spec.m_p0 + spec.eps_d) / g),
                                20 * math.log10(g / (spec.m_p0 - spec.eps_d)))
        ss.phase_margin_deg = min(ss.phase_margin_deg, math.degrees(spec.delta_d - ph))
        if not (spec.m_p0 - spec.eps_d <= g <= spec.m_p0 + spec.eps_d and ph <= spec.delta_d):
            ss.violations.append(float(fi))

    tr = SegmentResult("transient")
    for fi, mi in zip(f, m):
        if fi > spec.transient_edge:
            continue
        tr.n_samples += 1
        g, ph = abs(mi), abs(math.atan2(mi.imag, mi.real))
        tr.gain_margin_db = min(tr.gain_margin_db, 20 * math.log10(spec.m_bar_p / g))
        tr.phase_margin_deg = min(tr.phase_margin_deg, math.degrees(HALF_PI - ph))
        if not (g <= spec.m_bar_p and ph <= HALF_PI):
            tr.violations.append(float(fi))

    inert = SegmentResult("inertia", n_samples=int(above.sum()))
    slope = float(np.polyfit(np.log10(f[above]), np.log10(np.abs(m[above])), 1)[0])
    inert.gain_margin_db = -1.0 + spec.slope_tol - slope  # decades/decade
    if slope > -1.0 + spec.slope_tol:
        inert.violations.append(float(f[above][0]))

    warn = [] if ss.n_samples else ["no samples at or below f_d; steady-state window unchecked"]
    rep = {
        "steady_state": ComplianceReport([ss], warn),
        "transient": ComplianceReport([tr]),
        "inertia": ComplianceReport([inert], [f"fitted slope {slope:.4f} decades/decade"]),
    }
    return rep


def perf_window_inside_template(spec: PerfSpec, template: BoundTemplate, f_hz, f_base: float = F_BASE) -> list[float]:
    """Grid frequencies where the steady-state window is not inside the template.

    An empty list means every response admitted by the window at ``f <= f_d``
    is also admitted by the template.
    """
    bad = []
    for f in f_hz:
        if f > spec.f_d:
            continue
        seg = template.segment_for(f)
        if seg is None:
            bad.append(float(f))
            continue
        gmax = seg.gain_max(f, f_base)
        if gmax is not None and not (spec.m_p0 + spec.eps_d < gmax if seg.gain_strict else spec.m_p0 + spec.eps_d <= gmax):
            bad.append(float(f))
            continue
        if seg.phase_min is not None and not (seg.phase_min <= -spec.delta_d and spec.delta_d <= seg.phase_max):
            bad.append(float(f))
    return bad


# minimum inductance

def _angular(f_hz: float, unit: str, f_base: float) -> float:
    if unit == "pu":
        return hz_to_pu(f_hz, f_base)
    if unit == "rad/s":
        return TWO_PI * f_hz
    raise ValueError(f"unknown angular unit {unit!r}")


def min_inductance_transient(m_bar_p: float, rho: float, e_max: int, psi: float, f_alpha: float, eps_l: float,
                             omega0: float = 1.0, angular_unit: str = "pu", f_base: float = F_BASE) -> float:
    """Smallest line inductance keeping the transient droop band inside the unit-gain region.

    ``angular_unit`` selects how ``f_alpha`` enters the bound; ``"pu"`` matches
    the normalization of the loop response.
    """
    for v in (m_bar_p, psi, f_alpha, eps_l):
        if not v > 0:
            raise ValueError("inputs must be positive")
    if e_max < 1 or rho < 0:
        raise ValueError("invalid e_max or rho")
    w = _angular(f_alpha, angular_unit, f_base)
    return 2.0 * e_max / (psi * w) * (mu_dc(rho, omega0) + eps_l) * m_bar_p


def min_inductance_inertia(m_bar_p: float, H: float, D: float, rho: float, e_max: int, psi: float, alpha: float,
                           eps_l: float, omega0: float = 1.0, fc_mode: str = "d_over_h", angular_unit: str = "pu",
                           prefactor_at: str = "f_c", f_base: float = F_BASE) -> float:
    """Smallest line inductance for the inertia band above the cut-off frequency.

    ``prefactor_at`` picks the frequency in the ``1/omega`` prefactor: ``"f_c"``
    is the formula as usually stated; ``"f_dblprime"`` evaluates the gain
    ceiling at the upper band edge, the same point as the roll-off factor.
    """
    for v in (m_bar_p, psi, eps_l):
        if not v > 0:
            raise ValueError("inputs must be positive")
    if not 0 <= alpha < HALF_PI:
        raise ValueError("alpha must lie in [0, pi/2)")
    f_c = cutoff_frequency(H, D, fc_mode)
    try:
        f_dbl = freq_for_gain(rho, omega0, mu_dc(rho, omega0) + eps_l, f_base)
    except ValueError as exc:
        raise ValueError(f"cannot solve |mu| = mu0 + eps_l: {exc}") from exc
    if prefactor_at not in ("f_c", "f_dblprime"):
        raise ValueError(f"unknown prefactor frequency {prefactor_at!r}")
    w = _angular(f_c if prefactor_at == "f_c" else f_dbl, angular_unit, f_base)
    return (2.0 * e_max / (math.cos(alpha) * psi * w) * (mu_dc(rho, omega0) + eps_l) * m_bar_p
            / math.sqrt((f_dbl / f_c) ** 2 + 1.0))


_FORMULAS = {"transient": min_inductance_transient, "inertia": min_inductance_inertia}


def contour_grid(formula: str, axis1: tuple[str, list[float]], axis2: tuple[str, list[float]], fixed: dict) -> np.ndarray:
    """Evaluate a minimum-inductance formula on a rectangular parameter grid.

    Entry ``[i, j]`` uses ``axis1`` value ``i`` and ``axis2`` value ``j``.  A
    relative ``eps_l_rel`` in ``fixed`` is converted to an absolute tolerance
    from the DC line gain of each point.
    """
    if formula not in _FORMULAS:
        raise ValueError(f"unknown formula {formula!r}")
    fn = _FORMULAS[formula]
    (n1, v1), (n2, v2) = axis1, axis2
    out = np.empty((len(v1), len(v2)))
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            kw = dict(fixed)
            kw[n1], kw[n2] = a, b
            rel = kw.pop("eps_l_rel", None)
            if rel is not None:
                kw["eps_l"] = rel * mu_dc(kw["rho"], kw.get("omega0", 1.0))
            out[i, j] = fn(**kw)
    return out


def write_contour_csv(path, axis1, axis2, values: np.ndarray) -> None:
    (n1, v1), (n2, v2) = axis1, axis2
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([n1, n2, "ell_min"])
        for i, a in enumerate(v1):
            for j, b in enumerate(v2):
                w.writerow([fmt(a), fmt(b), fmt(values[i, j])])


def write_overlay_csv(path, dataset: DroopDataset, template: BoundTemplate) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["f_hz", "gain_db", "phase_deg", "segment", "gain_max_db", "phase_min_deg", "phase_max_deg"])
        for s in dataset.valid_samples():
            seg = template.segment_for(s.f_hz)
            g = abs(s.m_p)
            row = [fmt(s.f_hz), fmt(20 * math.log10(g) if g > 0 else -math.inf),
                   fmt(math.degrees(math.atan2(s.m_p.imag, s.m_p.real)))]
            if seg is None:
                row += ["", "", "", ""]
            else:
                gmax = seg.gain_max(s.f_hz, dataset.f_base_hz)
                row += [seg.name, fmt(20 * math.log10(gmax)) if gmax else "",
                        fmt(math.degrees(seg.phase_min)) if seg.phase_min is not None else "",
                        fmt(math.degrees(seg.phase_max)) if seg.phase_max is not None else ""]
            w.writerow(row)


def write_overlay_svg(path, dataset: DroopDataset, template: BoundTemplate) -> None:
    """Bode overlay of a dataset and a template; needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "droopcert"
    f = dataset.f_hz
    m = dataset.m_p
    fig, (ax_g, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    ax_g.semilogx(f, 20 * np.log10(np.abs(m)), "k", label=dataset.unit_id)
    ax_p.semilogx(f, np.degrees(np.unwrap(np.angle(m))), "k")
    for seg in template.segments:
        lo = max(seg.f_lo, f[0])
        hi = min(seg.f_hi, f[-1])
        if lo >= hi:
            continue
        ff = np.geomspace(lo, hi, 20)
        if seg.gain_coef is not None:
            ax_g.semilogx(ff, 20 * np.log10(seg.gain_coef * hz_to_pu(ff, dataset.f_base_hz)), "r--")
        if seg.phase_min is not None:
            ax_p.hlines([math.degrees(seg.phase_min), math.degrees(seg.phase_max)], lo, hi, colors="r", linestyles="--")
        ax_g.axvline(hi, color="0.7", lw=0.5)
    ax_g.set_ylabel("gain [dB]")
    ax_p.set_ylabel("phase [deg]")
    ax_p.set_xlabel("frequency [Hz]")
    ax_g.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
