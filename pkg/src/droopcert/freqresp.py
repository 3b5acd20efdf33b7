"""Frequency-response primitives.

All transfer functions are expressed in a per-unit Laplace variable
``s = s_phys / omega_base`` with ``omega_base = 2*pi*f_base``, so the nominal
line frequency sits at ``s = j``.  Users always see frequencies in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

F_BASE = 60.0
OMEGA_BASE = 2 * math.pi * F_BASE


class PoleOnAxisError(ValueError):
    """Raised when a transfer function is evaluated on one of its poles."""


def hz_to_pu(f_hz, f_base: float = F_BASE):
    """Convert a frequency in Hz to per-unit angular frequency."""
    return np.asarray(f_hz, dtype=float) / f_base if np.ndim(f_hz) else float(f_hz) / f_base


def pu_to_hz(w_pu, f_base: float = F_BASE):
    return np.asarray(w_pu, dtype=float) * f_base if np.ndim(w_pu) else float(w_pu) * f_base


def _trim(coeffs: Sequence[float]) -> tuple[float, ...]:
    c = [float(x) for x in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class RationalTransferFunction:
    """Real-rational ``N(s)/D(s)`` with coefficient lists ascending in ``s``."""

    numerator: tuple[float, ...]
    denominator: tuple[float, ...]

    def __post_init__(self):
        num = _trim(self.numerator)
        den = _trim(self.denominator)
        if not den or all(c == 0.0 for c in den):
            raise ValueError("denominator must have a nonzero coefficient")
        if not all(math.isfinite(c) for c in num + den):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @classmethod
    def constant(cls, k: float) -> "RationalTransferFunction":
        return cls((k,), (1.0,))

    @property
    def num_degree(self) -> int:
        if all(c == 0.0 for c in self.numerator):
            return -1
        return len(self.numerator) - 1

    @property
    def den_degree(self) -> int:
        return len(self.denominator) - 1

    @property
    def relative_degree(self) -> int:
        """``deg D - deg N``; negative for improper functions."""
        if self.num_degree < 0:
            return self.den_degree + 1
        return self.den_degree - self.num_degree

    @property
    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    @property
    def is_zero(self) -> bool:
        return self.num_degree < 0

    def dc_gain(self) -> float:
        if self.denominator[0] == 0.0:
            raise PoleOnAxisError("pole at s = 0")
        return self.numerator[0] / self.denominator[0]

    def __call__(self, s):
        """Evaluate at complex per-unit ``s`` (scalar or array)."""
        s = np.asarray(s, dtype=complex)
        num = np.polynomial.polynomial.polyval(s, self.numerator)
        den = np.polynomial.polynomial.polyval(s, self.denominator)
        if np.any(den == 0):
            raise PoleOnAxisError("pole on imaginary axis")
        out = num / den
        return complex(out) if out.ndim == 0 else out

    def poles(self) -> np.ndarray:
        if self.den_degree == 0:
            return np.zeros(0, dtype=complex)
        return np.polynomial.polynomial.polyroots(self.denominator).astype(complex)

    def zeros(self) -> np.ndarray:
        if self.num_degree <= 0:
            return np.zeros(0, dtype=complex)
        return np.polynomial.polynomial.polyroots(self.numerator).astype(complex)

    def is_stable(self) -> bool:
        """All poles strictly in the open left half-plane."""
        p = self.poles()
        return bool(np.all(p.real < 0)) if p.size else True

    def inverse(self) -> "RationalTransferFunction":
        if self.is_zero:
            raise ValueError("cannot invert the zero transfer function")
        return RationalTransferFunction(self.denominator, self.numerator)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            other = RationalTransferFunction.constant(float(other))
        P = np.polynomial.polynomial
        return RationalTransferFunction(
            tuple(P.polymul(self.numerator, other.numerator)),
            tuple(P.polymul(self.denominator, other.denominator)),
        )

    __rmul__ = __mul__

    def split_polynomial(self) -> tuple[tuple[float, ...], "RationalTransferFunction"]:
        """Split into polynomial part and strictly proper remainder.

        Returns ``(poly, rest)`` with ``self = poly(s) + rest(s)``, ``poly``
        ascending coefficients (empty when ``self`` is strictly proper).
        """
        if self.relative_degree > 0:
            return (), self
        q, r = np.polynomial.polynomial.polydiv(self.numerator, self.denominator)
        rest = RationalTransferFunction(tuple(r), self.denominator)
        return tuple(float(c) for c in q), rest

    def to_ss(self):
        """Controllable-canonical state-space realization ``(A, B, C, D)``.

        Only proper functions are realizable.
        """
        if not self.is_proper:
            raise ValueError("improper transfer function has no state-space realization")
        n = self.den_degree
        a = np.array(self.denominator) / self.denominator[-1]
        b = np.zeros(n + 1)
        b[: len(self.numerator)] = np.array(self.numerator) / self.denominator[-1]
        d = b[n]
        if n == 0:
            return (np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.array([[d]]))
        A = np.zeros((n, n))
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[:n]
        B = np.zeros((n, 1))
        B[-1, 0] = 1.0
        C = (b[:n] - d * a[:n]).reshape(1, n)
        return A, B, C, np.array([[d]])


def eval_tf(tf: RationalTransferFunction, f_p: float, f_base: float = F_BASE) -> complex:
    """Evaluate ``tf`` at ``s = j*2*pi*f_p/omega_base`` (per unit).

    Negative ``f_p`` is accepted and yields the complex conjugate.
    """
    return tf(1j * hz_to_pu(f_p, f_base))


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, positive grid of perturbation frequencies in Hz."""

    points: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(x) for x in self.points)
        if len(pts) < 1:
            raise ValueError("frequency grid is empty")
        if not all(math.isfinite(x) and x > 0 for x in pts):
            raise ValueError("grid points must be finite and positive")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points)

    def points_per_decade(self) -> float:
        if len(self.points) < 2:
            return 0.0
        decades = math.log10(self.points[-1] / self.points[0])
        return (len(self.points) - 1) / decades


def log_grid(f_min: float, f_max: float, n: int) -> FrequencyGrid:
    if not (0 < f_min < f_max) or n < 2:
        raise ValueError(f"invalid grid request ({f_min}, {f_max}, {n})")
    pts = np.logspace(math.log10(f_min), math.log10(f_max), int(n))
    pts[0], pts[-1] = f_min, f_max
    return FrequencyGrid(tuple(pts))


def default_grid() -> FrequencyGrid:
    return log_grid(0.1, 120.0, 61)


@dataclass(frozen=True)
class FrequencyResponseSample:
    f_p: float
    value: complex

    def __post_init__(self):
        if not self.f_p > 0:
            raise ValueError("sample frequency must be positive")
        if not np.isfinite(self.value):
            raise ValueError("sample value must be finite")


def gain_phase(value: complex) -> tuple[float, float]:
    """Gain in dB and principal phase in degrees within (-180, 180]."""
    if value == 0:
        return -math.inf, 0.0
    gain_db = 20.0 * math.log10(abs(value))
    phase = math.degrees(math.atan2(value.imag, value.real))
    if phase <= -180.0:
        phase += 360.0
    return gain_db, phase


def from_gain_phase(gain_db: float, phase_deg: float) -> complex:
    return 10 ** (gain_db / 20.0) * complex(math.cos(math.radians(phase_deg)), math.sin(math.radians(phase_deg)))


def unwrap_deg(phases_deg: Iterable[float]) -> np.ndarray:
    return np.degrees(np.unwrap(np.radians(np.asarray(list(phases_deg), dtype=float))))


def loglog_slope(f_hz, values) -> float:
    """Least-squares slope of ``log10|value|`` against ``log10 f``."""
    x = np.log10(np.asarray(f_hz, dtype=float))
    y = np.log10(np.abs(np.asarray(values)))
    return float(np.polyfit(x, y, 1)[0])
