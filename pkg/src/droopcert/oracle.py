"""Brute-force closed-loop model of a small network of droop units.

Every bus angle obeys ``theta' = omega`` with ``omega = -(1/psi) m_p(s) p`` and
the injections are ``p = B diag(kappa * mu(s)) B^T theta + delta``.  Each line
filter is strictly proper with relative degree two, so ``p'`` and ``p''`` are
available from line states; that lets units with a polynomial part up to
degree two (the grid-following response) be realized without inverting them.
Time is per unit (``t_pu = omega_base * t``) for the state matrices.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .freqresp import F_BASE
from .lines import LineParams, line_kappa, mu_tf
from .dataset import DroopDataset
from .stability import NetworkEnvelope, certify_unit
from .units import (ConstantParams, GflPllParams, GfmDroopParams, UnitKind, UnitModel, VsmParams, params_from_dict,
                    unit_droop_matrix)

REF_MODE_TOL = 1e-8
REF_ALIGN = 0.999
STABLE_TOL = 1e-9
DIVERGENCE_NORM = 1e6


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class Edge:
    n: int
    k: int
    line: LineParams


@dataclass
class NetworkGraph:
    n_bus: int
    edges: list[Edge]
    psi: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_bus < 1:
            raise ValueError("network needs at least one bus")
        if self.psi is None:
            self.psi = (1.0,) * self.n_bus
        if len(self.psi) != self.n_bus or any(not p > 0 for p in self.psi):
            raise ValueError("psi must hold one positive rating per bus")
        for e in self.edges:
            if e.n == e.k:
                raise ValueError("self-loops are not allowed")
            if not (0 <= e.n < self.n_bus and 0 <= e.k < self.n_bus):
                raise ValueError("edge refers to an unknown bus")
        if not self.is_connected():
            raise ValueError("network must be connected")

    def incidence(self) -> np.ndarray:
        B = np.zeros((self.n_bus, len(self.edges)))
        for j, e in enumerate(self.edges):
            B[e.n, j] = 1.0
            B[e.k, j] = -1.0
        return B

    def is_connected(self) -> bool:
        if self.n_bus == 1:
            return True
        adj = np.zeros((self.n_bus, self.n_bus))
        for e in self.edges:
            adj[e.n, e.k] = adj[e.k, e.n] = 1.0
        n_comp, _ = connected_components(adj, directed=False)
        return n_comp == 1

    def degree(self) -> np.ndarray:
        return np.abs(self.incidence()).sum(axis=1)

    def lines_at(self, n: int) -> list[LineParams]:
        return [e.line for e in self.edges if n in (e.n, e.k)]

    def to_dict(self) -> dict:
        return {
            "n_bus": self.n_bus,
            "psi": list(self.psi),
            "edges": [
                {"from": e.n, "to": e.k, "ell": e.line.ell, "rho": e.line.rho,
                 "V_from": e.line.V_n_star, "V_to": e.line.V_k_star}
                for e in self.edges
            ],
        }


def laplacian(graph: NetworkGraph) -> np.ndarray:
    B = graph.incidence()
    K = np.diag([line_kappa(e.line) for e in graph.edges])
    return B @ K @ B.T


@dataclass
class StateSpaceModel:
    A: np.ndarray
    B_in: np.ndarray
    C: np.ndarray
    D_thru: np.ndarray
    ref_direction: np.ndarray | None = None

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B_in.shape[0] != n or self.C.shape[1] != n:
            raise ValueError("state-space dimensions are inconsistent")
        if self.D_thru.shape != (self.C.shape[0], self.B_in.shape[1]):
            raise ValueError("feedthrough shape mismatch")
        for M in (self.A, self.B_in, self.C, self.D_thru):
            if not np.all(np.isfinite(M)):
                raise ValueError("state-space matrices must be finite")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]


def assemble_closed_loop(graph: NetworkGraph, units: list[UnitModel]) -> StateSpaceModel:
    """Realize the networked angle/power loop; inputs are load steps, outputs bus frequencies."""
    N = graph.n_bus
    if len(units) != N:
        raise ValueError(f"expected {N} units, got {len(units)}")
    E = len(graph.edges)
    Binc = graph.incidence()

    # polynomial parts and strictly proper remainders of each unit
    parts = []
    for u in units:
        poly, rest = u.m_p.split_polynomial()
        if len(poly) > 3:
            raise ValueError(f"unit {u.name}: droop response grows faster than s^2")
        parts.append((tuple(poly) + (0.0,) * (3 - len(poly)), rest.to_ss()))

    n_line = 2 * E
    r_sizes = [p[1][0].shape[0] for p in parts]
    r_off = N + n_line + np.concatenate([[0], np.cumsum(r_sizes)]).astype(int)
    nx = int(r_off[-1])

    # line blocks: x_m' = A_m x_m + B_m (b_m^T theta), flow_m = kappa_m x_m[0]
    A = np.zeros((nx, nx))
    P0 = np.zeros((N, nx))  # p = P0 x + delta
    P1 = np.zeros((N, nx))  # p'
    P2 = np.zeros((N, nx))  # p'' (delta derivatives dropped)
    for j, e in enumerate(graph.edges):
        Am, Bm, Cm, _ = mu_tf(e.line.rho, e.line.omega0).to_ss()
        sl = slice(N + 2 * j, N + 2 * j + 2)
        A[sl, sl] = Am
        A[sl, :N] = Bm @ Binc[:, j].reshape(1, N)
        kap = line_kappa(e.line)
        b = Binc[:, j].reshape(N, 1)
        P0[:, sl] += kap * b @ Cm
        P1[:, sl] += kap * b @ (Cm @ Am)
        P2[:, sl] += kap * b @ (Cm @ Am @ Am)
        P2[:, :N] += kap * (Cm @ Am @ Bm).item() * b @ Binc[:, j].reshape(1, N)

    B_in = np.zeros((nx, N))
    C = np.zeros((N, nx))
    D = np.zeros((N, N))
    for n, (u, (c, (Ar, Br, Cr, Dr))) in enumerate(zip(units, parts)):
        rs = slice(int(r_off[n]), int(r_off[n + 1]))
        A[rs, rs] = Ar
        A[rs, :] += Br @ P0[n : n + 1, :]
        B_in[rs, n] = Br[:, 0]
        # omega_n = -(1/psi)(C_R x_R + c0 p + c1 p' + c2 p'')
        row = np.zeros(nx)
        row[rs] = Cr[0]
        row += c[0] * P0[n] + c[1] * P1[n] + c[2] * P2[n]
        C[n] = -row / u.psi
        D[n, n] = -c[0] / u.psi
    A[:N, :] = C
    B_in[:N, :] = D
    ref = np.zeros(nx)
    ref[:N] = 1.0
    return StateSpaceModel(A, B_in, C, D, ref / np.linalg.norm(ref))


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    max_real_excl_ref: float
    stable: bool
    ref_index: int | None = None

    def to_dict(self) -> dict:
        ev = sorted(self.eigenvalues, key=lambda z: (-z.real, z.imag))
        return {
            "stable": self.stable,
            "max_real_excl_ref": self.max_real_excl_ref,
            "n_eigenvalues": len(ev),
            "reference_mode_excluded": self.ref_index is not None,
            "eigenvalues": [complex(z) for z in ev],
        }


def spectrum(model: StateSpaceModel) -> SpectrumReport:
    """Eigenvalues with the uniform-angle reference mode removed from the verdict."""
    A = model.A
    if A.shape[0] == 0:
        return SpectrumReport(np.zeros(0, dtype=complex), -math.inf, True)
    try:
        lam, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-solver failed (cond(A) = {np.linalg.cond(A):.3e})") from exc
    ref_idx = None
    if model.ref_direction is not None:
        best = 0.0
        for i in np.flatnonzero(np.abs(lam) < REF_MODE_TOL):
            v = V[:, i]
            sim = abs(np.vdot(model.ref_direction, v)) / np.linalg.norm(v)
            if sim > REF_ALIGN and sim > best:
                ref_idx, best = int(i), sim
    keep = np.ones(lam.size, dtype=bool)
    if ref_idx is not None:
        keep[ref_idx] = False
    mr = float(lam[keep].real.max()) if keep.any() else -math.inf
    return SpectrumReport(lam, mr, mr < -STABLE_TOL, ref_idx)


@dataclass
class StepResponse:
    t: np.ndarray  # seconds
    omega: np.ndarray  # per-unit frequency deviation, one row per bus
    diverged: bool = False

    def final(self) -> np.ndarray:
        return self.omega[:, -1]


def simulate_step(model: StateSpaceModel, delta_p, duration: float, dt: float | None = None,
                  f_base: float = F_BASE) -> StepResponse:
    """Trapezoidal response to a load step applied at ``t = 0`` (seconds)."""
    delta = np.asarray(delta_p, dtype=float).reshape(-1)
    if delta.size != model.B_in.shape[1]:
        raise ValueError("one step value per bus required")
    omega_b = 2 * math.pi * f_base
    A = omega_b * model.A
    Bd = omega_b * model.B_in @ delta
    n = A.shape[0]
    if dt is None:
        lam = np.abs(np.linalg.eigvals(A)) if n else np.zeros(1)
        dt = min(1e-3, 0.2 / max(lam.max(), 1e-12))
    nt = int(round(duration / dt)) + 1
    t = np.arange(nt) * dt
    I = np.eye(n)
    lhs = I - 0.5 * dt * A
    Phi = np.linalg.solve(lhs, I + 0.5 * dt * A)
    gam = np.linalg.solve(lhs, dt * Bd)
    out = np.zeros((model.C.shape[0], nt))
    x = np.zeros(n)
    y_in = model.D_thru @ delta
    out[:, 0] = model.C @ x + y_in
    diverged = False
    for k in range(1, nt):
        x = Phi @ x + gam
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            diverged = True
            out = out[:, :k]
            t = t[:k]
            break
        out[:, k] = model.C @ x + y_in
    return StepResponse(t, out, diverged)


def static_frequency_deviation(units: list[UnitModel], delta_p) -> float:
    """Steady-state frequency after a load step: ``-sum(delta) / sum(psi_n / m_n(0))``."""
    stiff = sum(u.psi / u.m_p.dc_gain() for u in units)
    return -float(np.sum(delta_p)) / stiff


def random_network(seed: int, bus_range: tuple[int, int], envelope: NetworkEnvelope, psi: float = 1.0,
                   extra_edge_prob: float = 0.3, ell_spread: float = 3.0) -> NetworkGraph:
    """Connected random topology inside ``envelope``.

    A random tree is grown under the degree cap, then extra edges are added;
    inductances are drawn from ``[ell_min, ell_spread * ell_min]``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bus_range
    if lo < 1 or hi < lo:
        raise ValueError("invalid bus range")
    cap = envelope.e_max
    n = int(rng.integers(lo, hi + 1))
    if cap == 1:
        n = min(n, 2)
    pairs: list[tuple[int, int]] = []
    deg = np.zeros(n, dtype=int)
    for k in range(1, n):
        cand = [j for j in range(k) if deg[j] < cap]
        j = int(rng.choice(cand))
        pairs.append((j, k))
        deg[j] += 1
        deg[k] += 1
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) in pairs or deg[a] >= cap or deg[b] >= cap:
                continue
            if rng.random() < extra_edge_prob:
                pairs.append((a, b))
                deg[a] += 1
                deg[b] += 1
    edges = []
    for a, b in pairs:
        ell = envelope.ell_min * float(rng.uniform(1.0, ell_spread))
        edges.append(Edge(a, b, LineParams(ell=ell, rho=envelope.rho, V_n_star=envelope.V_max,
                                           V_k_star=envelope.V_max, omega0=envelope.omega0)))
    return NetworkGraph(n, edges, (psi,) * n)


def unit_from_dict(d: dict) -> UnitModel:
    kind = UnitKind(d["kind"])
    params = params_from_dict(kind, d.get("params", {}))
    return unit_droop_matrix(kind, params, psi=float(d.get("psi", 1.0)), name=d.get("name"))


def network_from_dict(d: dict) -> tuple[NetworkGraph, list[UnitModel]]:
    """Parse ``{"buses": [{"unit": {...}, "psi": ..}], "edges": [{"from", "to", "ell", "rho"}]}``."""
    try:
        buses = d["buses"]
        units = []
        for b in buses:
            u = dict(b["unit"])
            u.setdefault("psi", b.get("psi", 1.0))
            units.append(unit_from_dict(u))
        edges = [
            Edge(int(e["from"]), int(e["to"]),
                 LineParams(ell=float(e["ell"]), rho=float(e.get("rho", 0.1)),
                            V_n_star=float(e.get("V_from", 1.0)), V_k_star=float(e.get("V_to", 1.0))))
            for e in d.get("edges", [])
        ]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed network description: {exc}") from exc
    graph = NetworkGraph(len(buses), edges, tuple(u.psi for u in units))
    return graph, units


def load_network(path) -> tuple[NetworkGraph, list[UnitModel]]:
    return network_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class SoundnessTrial:
    seed: int
    graph: NetworkGraph
    units: list[UnitModel]
    alpha: float
    report: SpectrumReport


def _draw_unit(rng: np.random.Generator, psi: float) -> UnitModel:
    kind = rng.choice(["GfmDroop", "Vsm", "GflPll", "Constant"])
    if kind == "GfmDroop":
        params = GfmDroopParams(m_p0=float(rng.uniform(0.02, 0.08)), tau=float(rng.uniform(0.005, 0.2)))
    elif kind == "Vsm":
        params = VsmParams(H=float(rng.uniform(0.5, 8.0)), D=float(rng.uniform(10.0, 50.0)))
    elif kind == "GflPll":
        params = GflPllParams(k_p=float(rng.uniform(0.1, 1.0)), k_i=float(rng.uniform(0.01, 0.2)),
                              tau_d=float(rng.uniform(0.002, 0.05)), D=float(rng.uniform(10.0, 50.0)))
    else:
        params = ConstantParams(m_p0=float(rng.uniform(0.02, 0.08)))
    return unit_droop_matrix(kind, params, psi=psi)


def draw_certified_unit(rng: np.random.Generator, envelope: NetworkEnvelope, alpha: float, grid,
                        psi: float = 1.0, max_tries: int = 200) -> UnitModel:
    """Rejection-sample a reference unit whose certificate interval contains ``alpha``."""
    for _ in range(max_tries):
        u = _draw_unit(rng, psi)
        ds = DroopDataset.from_tf(u.name, u.m_p, grid)
        res = certify_unit(ds, envelope, m_p_model=u.m_p, psi=psi)
        if res.alpha_interval and res.alpha_interval[0] < alpha < res.alpha_interval[1]:
            return u
    raise RuntimeError("no certified unit found; envelope too tight for the sampled families")


def soundness_trial(seed: int, envelope: NetworkEnvelope, alpha: float, grid, bus_range=(2, 6),
                    psi: float = 1.0) -> SoundnessTrial:
    """One randomized network of certified units, with its closed-loop spectrum."""
    graph = random_network(seed, bus_range, envelope, psi=psi)
    rng = np.random.default_rng([seed, 1])
    units = [draw_certified_unit(rng, envelope, alpha, grid, psi) for _ in range(graph.n_bus)]
    return SoundnessTrial(seed, graph, units, alpha, spectrum(assemble_closed_loop(graph, units)))
