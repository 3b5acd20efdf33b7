from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from droopcert.freqresp import default_grid
from droopcert.lines import LineParams, line_kappa
from droopcert.oracle import (Edge, NetworkGraph, StateSpaceModel, assemble_closed_loop, laplacian, load_network,
                              network_from_dict, random_network, simulate_step, soundness_trial, spectrum,
                              static_frequency_deviation)
from droopcert.stability import NetworkEnvelope, gamma_bar
from droopcert.units import ConstantParams, GflPllParams, unit_droop_matrix

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ENV = NetworkEnvelope(1.97, 2, rho=0.1)


def _const(n, m=0.05, psi=1.0):
    return [unit_droop_matrix("Constant", ConstantParams(m), psi=psi) for _ in range(n)]


def _pair(ell=1.0, rho=0.1):
    return NetworkGraph(2, [Edge(0, 1, LineParams(ell, rho))])


def test_graph_validation():
    with pytest.raises(ValueError):
        NetworkGraph(2, [Edge(0, 0, LineParams(1.0))])
    with pytest.raises(ValueError):
        NetworkGraph(3, [Edge(0, 1, LineParams(1.0))])
    with pytest.raises(ValueError):
        NetworkGraph(2, [Edge(0, 1, LineParams(1.0))], psi=(1.0, -1.0))


def test_laplacian_examples():
    L = laplacian(_pair(0.5))
    assert L == pytest.approx(np.array([[2.0, -2.0], [-2.0, 2.0]]))
    g = NetworkGraph(3, [Edge(0, 1, LineParams(1.0)), Edge(1, 2, LineParams(1.0)), Edge(0, 2, LineParams(1.0))])
    assert np.linalg.eigvalsh(laplacian(g)) == pytest.approx([0.0, 3.0, 3.0], abs=1e-12)


def test_laplacian_spectrum_within_coupling_bound():
    for seed in range(20):
        g = random_network(seed, (2, 8), ENV)
        assert np.linalg.eigvalsh(laplacian(g)).max() <= gamma_bar(ENV) + 1e-9
        assert g.degree().max() <= ENV.e_max


def test_random_network_deterministic():
    a = random_network(7, (3, 6), ENV).to_dict()
    b = random_network(7, (3, 6), ENV).to_dict()
    assert a == b


def test_two_bus_constant_droop_matches_polynomial():
    rho, m = 0.1, 0.05
    graph = _pair(1.0, rho)
    model = assemble_closed_loop(graph, _const(2, m))
    kap = line_kappa(graph.edges[0].line)
    got = np.linalg.eigvals(model.A)
    for z in np.roots([1.0, 2 * rho, 1.0 + rho**2, 2 * kap * m]):
        assert np.min(np.abs(got - z)) < 1e-8
    rep = spectrum(model)
    assert rep.stable and rep.ref_index is not None


def test_single_bus_has_only_reference_mode():
    model = assemble_closed_loop(NetworkGraph(1, []), _const(1))
    rep = spectrum(model)
    assert rep.stable
    assert rep.max_real_excl_ref == -np.inf


def test_diagonal_state_matrix():
    A = np.diag([-1.0, -2.0, 0.5])
    rep = spectrum(StateSpaceModel(A, np.zeros((3, 1)), np.zeros((1, 3)), np.zeros((1, 1))))
    assert rep.max_real_excl_ref == pytest.approx(0.5)
    assert not rep.stable


def test_unstable_grid_following_pair_diverges():
    p = GflPllParams(k_p=0.2357, k_i=10.0, tau_d=0.001, D=1.0)
    units = [unit_droop_matrix("GflPll", p) for _ in range(2)]
    model = assemble_closed_loop(_pair(0.1, 0.1), units)
    rep = spectrum(model)
    assert not rep.stable and rep.max_real_excl_ref > 0.1
    resp = simulate_step(model, [0.01, 0.0], 20.0)
    assert resp.diverged or np.abs(resp.omega).max() > 1.0


def test_default_grid_following_pair_is_stable():
    units = [unit_droop_matrix("GflPll", GflPllParams()) for _ in range(2)]
    assert spectrum(assemble_closed_loop(_pair(1.97), units)).stable


def test_zero_step_stays_at_rest():
    model = assemble_closed_loop(_pair(), _const(2))
    resp = simulate_step(model, [0.0, 0.0], 1.0)
    assert np.all(resp.omega == 0.0)


def test_step_settles_to_static_prediction():
    units = _const(2)
    model = assemble_closed_loop(_pair(), units)
    resp = simulate_step(model, [0.1, 0.0], 100.0)
    pred = static_frequency_deviation(units, [0.1, 0.0])
    assert pred == pytest.approx(-0.0025)
    np.testing.assert_allclose(resp.final(), pred, atol=1e-6)
    single = _const(1)
    r1 = simulate_step(assemble_closed_loop(NetworkGraph(1, []), single), [0.1], 1.0)
    assert r1.final()[0] == pytest.approx(-0.005)


def test_trajectory_decays_like_spectrum():
    units = _const(2)
    model = assemble_closed_loop(_pair(), units)
    rep = spectrum(model)
    resp = simulate_step(model, [0.1, 0.0], 100.0)
    dev = np.abs(resp.omega - resp.final()[:, None]).max(axis=0)
    rate = -rep.max_real_excl_ref * 2 * np.pi * 60.0
    t_mid = 20.0
    k = np.searchsorted(resp.t, t_mid)
    # envelope after t_mid should not exceed the slowest mode's decay by much
    assert dev[k:].max() <= dev[: k].max() * np.exp(-rate * t_mid) * 10 + 1e-9


def test_network_file_round_trip(tmp_path):
    d = json.loads((CONFIGS / "network_two_bus.json").read_text())
    g, units = network_from_dict(d)
    assert g.n_bus == 2 and len(units) == 2
    path = tmp_path / "n.json"
    path.write_text(json.dumps(d))
    g2, _ = load_network(path)
    assert g2.to_dict() == g.to_dict()
    with pytest.raises(ValueError):
        network_from_dict({"buses": [{}]})


def test_soundness_trial_runs():
    trial = soundness_trial(0, ENV, np.radians(50.0), default_grid())
    assert trial.report.stable
    assert len(trial.units) == trial.graph.n_bus
