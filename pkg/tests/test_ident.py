from __future__ import annotations

import math

import numpy as np
import pytest

from droopcert.freqresp import eval_tf, log_grid
from droopcert.ident import (ExperimentPair, IllConditionedExperiment, ProbeSpec, build_testbed, derive_frequency,
                             extract_phasor, probe_signal, recover_droop_matrix, run_experiment, run_sweep)
from droopcert.units import GfmDroopParams, unit_droop_matrix


def test_probe_rejects_both_amplitudes():
    with pytest.raises(ValueError):
        ProbeSpec(1.0, A_V=0.01, A_omega=0.01)
    with pytest.raises(ValueError):
        ProbeSpec(1.0, A_omega=0.5)


def test_probe_waveform():
    t = np.linspace(0, 1, 101)
    V, w = probe_signal(ProbeSpec(2.0, A_V=0.01), t)
    assert V.max() == pytest.approx(1.01, abs=1e-4)
    np.testing.assert_allclose(w, 1.0)


def test_phasor_of_known_tone():
    f = 3.0
    dt = 1 / (f * 64)
    t = np.arange(64 * 10) * dt
    x = 0.7 * np.cos(2 * np.pi * f * t - 0.4) + 0.2
    c = extract_phasor(x, f, t=t)
    assert abs(c) == pytest.approx(0.7, rel=1e-10)
    assert np.angle(c) == pytest.approx(-0.4, abs=1e-10)


def test_phasor_needs_full_period():
    t = np.linspace(0, 0.1, 50)
    with pytest.raises(ValueError):
        extract_phasor(np.sin(t), 1.0, t=t)


def test_frequency_from_angle_phasor():
    assert derive_frequency(1.0 + 0j, 60.0) == pytest.approx(1j)


def test_ill_conditioned_pair():
    pair = ExperimentPair(np.eye(2, dtype=complex), np.array([[1, 1], [1, 1 + 1e-12]], dtype=complex))
    with pytest.raises(IllConditionedExperiment):
        recover_droop_matrix(pair)


def test_testbed_matches_analytic_droop(reference_units):
    for name, u in reference_units.items():
        tb = build_testbed(u)
        assert np.all(tb.eigenvalues().real < 0), name


@pytest.mark.parametrize("name", ["gfm", "vsm", "gfl", "const"])
def test_single_point_recovery(reference_units, analytic_tfs, name):
    f = 5.0
    M = recover_droop_matrix(run_experiment(reference_units[name], f))
    ref = eval_tf(analytic_tfs[name], f)
    assert abs(M[0, 0] - ref) / abs(ref) < 0.01
    assert abs(M[0, 1]) < 1e-3 * abs(ref) + 1e-9
    assert abs(M[1, 1] - 0.05 / (1 + 1j * 2 * math.pi * f * 0.05)) < 1e-3


def test_sweep_marks_points(reference_units):
    ds = run_sweep(reference_units["gfm"], log_grid(1.0, 10.0, 3))
    assert [s.ok for s in ds.samples] == [True, True, True]
    assert ds.meta["source"] == "two-bus sweep"


def test_cross_coupling_recovered():
    from droopcert.freqresp import RationalTransferFunction

    zeta = RationalTransferFunction((0.01,), (1.0, 0.5))
    u = unit_droop_matrix("GfmDroop", GfmDroopParams(0.05, 0.05), zeta_p=zeta)
    M = recover_droop_matrix(run_experiment(u, 2.0))
    assert abs(M[1, 0] - eval_tf(zeta, 2.0)) < 0.01 * abs(eval_tf(zeta, 2.0))


def test_probe_at_time_zero_and_voltage_only():
    V, w = probe_signal(ProbeSpec(5.0, A_omega=0.001), np.array([0.0]))
    assert V[0] == 1.0 and w[0] == 1.0
    t = np.linspace(0, 1, 50)
    V, _ = probe_signal(ProbeSpec(5.0, A_omega=0.001), t)
    np.testing.assert_array_equal(V, 1.0)


def test_phasor_conventions_and_leakage():
    t = np.arange(2000) / 2000.0
    assert extract_phasor(0.1 * np.sin(2 * np.pi * 10 * t), 10.0, t=t) == pytest.approx(-0.1j, abs=1e-14)
    assert extract_phasor(0.05 * np.cos(2 * np.pi * 10 * t), 10.0, t=t) == pytest.approx(0.05, abs=1e-14)
    two = 0.3 * np.cos(2 * np.pi * 10 * t) + 0.7 * np.cos(2 * np.pi * 25 * t + 1.0)
    assert abs(extract_phasor(two, 10.0, t=t) - 0.3) < 1e-10


def test_frequency_derivation_examples():
    assert derive_frequency(-1j, 60.0) == pytest.approx(1.0)
    assert abs(derive_frequency(1.0, 120.0)) == pytest.approx(2 * abs(derive_frequency(1.0, 60.0)))


def test_recovery_examples():
    M0 = np.diag([0.05, 0.05]).astype(complex)
    U = np.array([[1.0, 0.3j], [0.2, 2.0]], dtype=complex)
    np.testing.assert_allclose(recover_droop_matrix(ExperimentPair(-M0 @ U, U)), M0, atol=1e-15)
    M = np.array([[1, 2], [3, 4]], dtype=complex)
    np.testing.assert_allclose(recover_droop_matrix(ExperimentPair(-M, np.eye(2))), M)


def test_linearity_in_probe_amplitude(reference_units):
    u = reference_units["vsm"]
    a = recover_droop_matrix(run_experiment(u, 2.0))
    b = recover_droop_matrix(run_experiment(u, 2.0, A_omega=0.002, A_V=0.02))
    assert np.abs(a - b).max() <= 1e-3 * np.abs(a).max()


def test_zero_amplitude_probe_gives_zero_response(reference_units):
    from droopcert.ident import simulate_two_bus

    ts = simulate_two_bus(reference_units["gfm"], ProbeSpec(1.0))
    for ch in (ts.theta, ts.p, ts.q):
        assert np.all(ch == 0.0)


def test_constant_droop_sweep_is_flat(reference_units):
    ds = run_sweep(reference_units["const"], log_grid(0.5, 50.0, 5))
    np.testing.assert_allclose(ds.m_p, 0.05, rtol=1e-3, atol=5e-5)
