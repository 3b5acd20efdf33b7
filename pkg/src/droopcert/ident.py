"""Probing experiments on a linear two-bus testbed and droop-matrix recovery.

The unit under test is tied to an ideal controllable source through a
quasi-static coupling line.  Each channel of the unit is realized in whichever
causal direction is proper: ``dw = -m_p dp`` when ``m_p`` is proper, otherwise
``dp = -(s/m_p) dtheta`` (the grid-following case).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dataset import DroopDataset, DroopSample
from .freqresp import F_BASE, FrequencyGrid, RationalTransferFunction
from .lines import LineParams, line_kappa, mu_dc
from .units import UnitModel

log = logging.getLogger(__name__)

AMPLITUDE_CAP = 0.1
DEFAULT_A_OMEGA = 1e-3
DEFAULT_A_V = 1e-2
DEFAULT_COUPLING = LineParams(ell=0.1, rho=0.1)


class TestbedUnstableError(RuntimeError):
    __test__ = False

    def __init__(self, f_p: float, max_real: float):
        super().__init__(f"testbed unstable at f_p = {f_p:g} Hz (max Re = {max_real:.3g} 1/s)")
        self.f_p = f_p
        self.max_real = max_real


class IllConditionedExperiment(RuntimeError):
    def __init__(self, cond: float):
        super().__init__(f"ill-conditioned experiment (cond(U) = {cond:.3g})")
        self.cond = cond


@dataclass(frozen=True)
class ProbeSpec:
    f_p: float
    A_V: float = 0.0
    A_omega: float = 0.0
    V_star: float = 1.0
    f0: float = F_BASE
    cap: float = AMPLITUDE_CAP

    def __post_init__(self):
        if not self.f_p > 0:
            raise ValueError("probe frequency must be positive")
        if self.A_V != 0 and self.A_omega != 0:
            raise ValueError("perturb either voltage or frequency, not both")
        if abs(self.A_V) > self.cap or abs(self.A_omega) > self.cap:
            raise ValueError(f"probe amplitude exceeds small-signal cap {self.cap}")


def probe_signal(spec: ProbeSpec, t):
    """Source voltage magnitude and frequency (per unit) at time ``t`` seconds."""
    arg = 2 * np.pi * spec.f_p * np.asarray(t, dtype=float)
    return spec.V_star + spec.A_V * np.sin(arg), 1.0 + spec.A_omega * np.sin(arg)


def _source_deviations(spec: ProbeSpec, t: np.ndarray) -> np.ndarray:
    """``(dtheta_g, dV_g)`` with the angle obtained by integrating the frequency."""
    wt = 2 * np.pi * spec.f_p * t
    omega_b = 2 * np.pi * spec.f0
    theta = omega_b * spec.A_omega / (2 * np.pi * spec.f_p) * (1.0 - np.cos(wt))
    return np.vstack([theta, spec.A_V * np.sin(wt)])


@dataclass
class TimeSeries:
    t: np.ndarray
    theta: np.ndarray
    V: np.ndarray
    p: np.ndarray
    q: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def channel(self, name: str) -> np.ndarray:
        return getattr(self, name)


@dataclass
class Testbed:
    """Closed-loop state space in per-unit time.

    Inputs ``(dtheta_g, dV_g)``, outputs ``(dtheta, dV, dp, dq)`` at the unit terminal.
    """

    __test__ = False

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        if self.A.size == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.A)

    def frequency_response(self, f_hz: float, f_base: float = F_BASE) -> np.ndarray:
        s = 1j * f_hz / f_base
        n = self.A.shape[0]
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D


def _block(tf: RationalTransferFunction):
    A, B, C, D = tf.to_ss()
    return A, B.reshape(-1), C.reshape(-1), float(D[0, 0])


def build_testbed(unit: UnitModel, line: LineParams = DEFAULT_COUPLING) -> Testbed:
    kappa = line_kappa(line)
    K = kappa * mu_dc(line.rho, line.omega0) * np.array(
        [[1.0, line.rho / (line.omega0 * line.V_k_star)], [line.rho / line.omega0, 1.0 / line.V_k_star]]
    )
    p_imp = unit.m_p.is_proper
    q_imp = unit.m_q.is_proper
    if p_imp:
        blk1 = _block(unit.m_p)
    else:
        w = unit.m_p.inverse() * RationalTransferFunction((0.0, 1.0), (1.0,))
        if not w.is_proper:
            raise ValueError("m_p has no causal realization in the testbed")
        blk1 = _block(w)
    blk2 = _block(unit.m_q if q_imp else unit.m_q.inverse())
    if not q_imp and not unit.m_q.inverse().is_proper:
        raise ValueError("m_q has no causal realization in the testbed")
    if unit.has_cross_coupling and not (p_imp and q_imp):
        raise ValueError("cross-coupling requires proper m_p and m_q")
    blk3 = _block(unit.zeta_q)
    blk4 = _block(unit.zeta_p)

    sizes = [b[0].shape[0] for b in (blk1, blk2, blk3, blk4)]
    offs = np.cumsum([0] + sizes)
    nx = int(offs[-1]) + (1 if p_imp else 0)
    ith = nx - 1 if p_imp else None  # theta state index

    # algebraic unknowns: p, q, V, [theta]
    na = 3 if p_imp else 4
    P_, Q_, V_ = 0, 1, 2
    TH_ = None if p_imp else 3
    E = np.zeros((na, na))
    F = np.zeros((na, nx))
    G = np.zeros((na, 2))

    def sl(i):
        return slice(int(offs[i]), int(offs[i + 1]))

    # coupling line
    for row, (k_th, k_v) in enumerate(K):
        var = P_ if row == 0 else Q_
        E[row, var] = 1.0
        E[row, V_] -= k_v
        if p_imp:
            F[row, ith] += k_th
        else:
            E[row, TH_] -= k_th
        G[row] = [-k_th, -k_v]
    A2, B2, C2, D2 = blk2
    A4, B4, C4, D4 = blk4
    if q_imp:
        E[2, V_] = 1.0
        E[2, Q_] += D2
        E[2, P_] += D4
        F[2, sl(1)] = -C2
        F[2, sl(3)] = -C4
    else:
        E[2, Q_] = 1.0
        E[2, V_] += D2
        F[2, sl(1)] = -C2
    A1, B1, C1, D1 = blk1
    if not p_imp:
        E[3, P_] = 1.0
        E[3, TH_] = D1
        F[3, sl(0)] = -C1

    S = np.linalg.solve(E, F)
    T = np.linalg.solve(E, G)

    # state derivative x' = Ax x + Bx a
    Ax = np.zeros((nx, nx))
    Bx = np.zeros((nx, na))
    Ax[sl(0), sl(0)] = A1
    Bx[sl(0), P_ if p_imp else TH_] = B1
    Ax[sl(1), sl(1)] = A2
    Bx[sl(1), Q_ if q_imp else V_] = B2
    A3, B3, C3, D3 = blk3
    Ax[sl(2), sl(2)] = A3
    Bx[sl(2), Q_] = B3
    Ax[sl(3), sl(3)] = A4
    Bx[sl(3), P_] = B4
    if p_imp:
        Ax[ith, sl(0)] = -C1
        Ax[ith, sl(2)] = -C3
        Bx[ith, P_] = -D1
        Bx[ith, Q_] = -D3

    A = Ax + Bx @ S
    B = Bx @ T
    # outputs theta, V, p, q
    C = np.zeros((4, nx))
    D = np.zeros((4, 2))
    if p_imp:
        C[0, ith] = 1.0
    else:
        C[0], D[0] = S[TH_], T[TH_]
    for row, idx in ((1, V_), (2, P_), (3, Q_)):
        C[row], D[row] = S[idx], T[idx]
    return Testbed(A, B, C, D)


def _trapezoid(A: np.ndarray, B: np.ndarray, r: np.ndarray, h: float) -> np.ndarray:
    """Fixed-step trapezoidal integration of ``x' = A x + B r`` from rest."""
    n = A.shape[0]
    nt = r.shape[1]
    X = np.zeros((n, nt))
    if n == 0:
        return X
    I = np.eye(n)
    lhs = I - 0.5 * h * A
    Phi = np.linalg.solve(lhs, I + 0.5 * h * A)
    Gam = np.linalg.solve(lhs, 0.5 * h * B)
    drive = Gam @ (r[:, :-1] + r[:, 1:])
    x = np.zeros(n)
    for k in range(nt - 1):
        x = Phi @ x + drive[:, k]
        X[:, k + 1] = x
    return X


@dataclass
class SimSettings:
    samples_per_period: int = 64
    discard_periods: int = 20
    discard_time_constants: float = 10.0
    keep_periods: int = 10
    line: LineParams = DEFAULT_COUPLING


def simulate_two_bus(unit: UnitModel, spec: ProbeSpec, duration: float | None = None, dt: float | None = None,
                     settings: SimSettings | None = None) -> TimeSeries:
    """Integrate the testbed under a single-tone probe; return the retained window.

    Without ``duration`` the run length is the transient-discard window plus
    ``keep_periods`` probe periods.
    """
    settings = settings or SimSettings()
    tb = build_testbed(unit, settings.line)
    omega_b = 2 * np.pi * spec.f0
    A = omega_b * tb.A
    B = omega_b * tb.B
    eig = np.linalg.eigvals(A) if A.size else np.zeros(0)
    if eig.size and eig.real.max() > 0:
        raise TestbedUnstableError(spec.f_p, float(eig.real.max()))
    period = 1.0 / spec.f_p
    if dt is None:
        dt = period / settings.samples_per_period
    if dt > period / 50:
        raise ValueError("time step must resolve at least 50 samples per probe period")
    slow = [-e.real for e in eig if e.real < 0]
    tau_dom = 1.0 / min(slow) if slow else 0.0
    discard = max(settings.discard_time_constants * tau_dom, settings.discard_periods * period)
    discard = math.ceil(discard / period - 1e-9) * period
    if duration is None:
        duration = discard + settings.keep_periods * period
    elif duration <= discard + period:
        raise ValueError("duration leaves less than one probe period after the transient window")
    nt = int(round(duration / dt)) + 1
    t = np.arange(nt) * dt
    r = _source_deviations(spec, t)
    X = _trapezoid(A, B, r, dt)
    Y = tb.C @ X + tb.D @ r
    keep = t >= discard - 0.5 * dt
    return TimeSeries(t[keep], Y[0, keep], Y[1, keep], Y[2, keep], Y[3, keep])


def extract_phasor(series, f_p: float, t=None, dt: float | None = None) -> complex:
    """Single-bin Fourier projection: returns ``c`` with ``x(t) ~ Re{c exp(j 2 pi f_p t)}``.

    ``series`` is a sample array with time stamps ``t`` (or a uniform ``dt``
    starting at zero).  The window is trimmed to an integer number of periods.
    """
    x = np.asarray(series, dtype=float)
    if t is None:
        if dt is None:
            raise ValueError("either t or dt is required")
        t = np.arange(x.size) * dt
    t = np.asarray(t, dtype=float)
    step = t[1] - t[0] if t.size > 1 else 0.0
    if step <= 0:
        raise ValueError("need at least two increasing samples")
    span = x.size * step * f_p
    periods = math.floor(span + 1e-9)
    if periods < 1:
        raise ValueError("window shorter than one probe period")
    n = int(round(periods / (f_p * step)))
    n = min(n, x.size)
    ph = np.exp(-2j * np.pi * f_p * t[:n])
    return complex(2.0 / n * np.dot(x[:n], ph))


def derive_frequency(theta_phasor: complex, f_p: float, f_base: float = F_BASE) -> complex:
    if not f_p > 0:
        raise ValueError("f_p must be positive")
    return 1j * (f_p / f_base) * theta_phasor


@dataclass
class ExperimentPair:
    Y: np.ndarray
    U: np.ndarray


def recover_droop_matrix(pair: ExperimentPair, cond_max: float = 1e8) -> np.ndarray:
    U = np.asarray(pair.U, dtype=complex)
    cond = float(np.linalg.cond(U))
    if not np.isfinite(cond) or cond > cond_max:
        raise IllConditionedExperiment(cond)
    return -np.asarray(pair.Y, dtype=complex) @ np.linalg.inv(U)


def run_experiment(unit: UnitModel, f_p: float, A_omega: float = DEFAULT_A_OMEGA, A_V: float = DEFAULT_A_V,
                   settings: SimSettings | None = None) -> ExperimentPair:
    """Frequency then voltage perturbation at ``f_p``; collects Y and U."""
    Y = np.zeros((2, 2), dtype=complex)
    U = np.zeros((2, 2), dtype=complex)
    for col, spec in enumerate((ProbeSpec(f_p, A_omega=A_omega), ProbeSpec(f_p, A_V=A_V))):
        ts = simulate_two_bus(unit, spec, settings=settings)
        th, v, p, q = (extract_phasor(ts.channel(c), f_p, t=ts.t) for c in ("theta", "V", "p", "q"))
        Y[:, col] = [derive_frequency(th, f_p, spec.f0), v]
        U[:, col] = [p, q]
    return ExperimentPair(Y, U)


def run_sweep(unit: UnitModel, grid: FrequencyGrid, A_omega: float = DEFAULT_A_OMEGA, A_V: float = DEFAULT_A_V,
              settings: SimSettings | None = None, cond_max: float = 1e8, unit_id: str | None = None) -> DroopDataset:
    samples = []
    for f in grid:
        try:
            pair = run_experiment(unit, f, A_omega, A_V, settings)
            M = recover_droop_matrix(pair, cond_max)
            samples.append(DroopSample(
                f_hz=float(f), m_p=M[0, 0], zeta_q=M[0, 1], zeta_p=M[1, 0], m_q=M[1, 1],
                cond=float(np.linalg.cond(pair.U)),
            ))
        except (TestbedUnstableError, IllConditionedExperiment, np.linalg.LinAlgError) as exc:
            log.warning("sweep point %g Hz failed: %s", f, exc)
            samples.append(DroopSample(f_hz=float(f), m_p=0j, cond=math.inf, ok=False, error=str(exc)))
    return DroopDataset(unit_id=unit_id or unit.name, samples=samples, meta={"source": "two-bus sweep"})
