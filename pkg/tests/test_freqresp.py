from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from droopcert.freqresp import (FrequencyGrid, PoleOnAxisError, RationalTransferFunction, default_grid, eval_tf,
                                gain_phase, from_gain_phase, hz_to_pu, log_grid, loglog_slope, pu_to_hz, unwrap_deg)


def test_per_unit_conversion():
    assert hz_to_pu(60.0) == 1.0
    assert pu_to_hz(0.5) == 30.0
    np.testing.assert_allclose(hz_to_pu(np.array([6.0, 120.0])), [0.1, 2.0])


def test_first_order_lag_at_corner():
    tf = RationalTransferFunction((1.0,), (1.0, 1.0))
    assert abs(eval_tf(tf, 60.0) - 1 / (1 + 1j)) < 1e-15
    g, p = gain_phase(eval_tf(tf, 60.0))
    assert g == pytest.approx(-3.0103, abs=1e-4)
    assert p == pytest.approx(-45.0)


def test_negative_frequency_conjugates():
    tf = RationalTransferFunction((1.0, 0.3), (2.0, 1.0, 1.0))
    assert eval_tf(tf, -7.0) == pytest.approx(np.conj(eval_tf(tf, 7.0)))


def test_pole_on_axis_raises():
    integrator = RationalTransferFunction((1.0,), (0.0, 1.0))
    with pytest.raises(PoleOnAxisError):
        integrator(0.0)
    osc = RationalTransferFunction((1.0,), (1.0, 0.0, 1.0))
    with pytest.raises(PoleOnAxisError):
        eval_tf(osc, 60.0)


def test_zero_gain_is_minus_infinity():
    g, _ = gain_phase(0j)
    assert g == -math.inf


def test_degrees_and_properness():
    gfl_like = RationalTransferFunction((1.0, 1.0, 1.0), (1.0,))
    assert gfl_like.relative_degree == -2
    assert not gfl_like.is_proper
    with pytest.raises(ValueError):
        gfl_like.to_ss()
    poly, rest = gfl_like.split_polynomial()
    assert poly == (1.0, 1.0, 1.0)
    assert rest.is_zero


def test_invalid_coefficients():
    with pytest.raises(ValueError):
        RationalTransferFunction((1.0,), (0.0,))
    with pytest.raises(ValueError):
        RationalTransferFunction((math.nan,), (1.0,))


def test_state_space_matches_evaluation():
    tf = RationalTransferFunction((0.5, 2.0, 1.0), (3.0, 4.0, 2.0, 1.0))
    A, B, C, D = tf.to_ss()
    for s in (0.1j, 1j, 3 + 2j):
        ss = (C @ np.linalg.solve(s * np.eye(A.shape[0]) - A, B) + D)[0, 0]
        assert ss == pytest.approx(tf(s))


def test_grid_validation():
    with pytest.raises(ValueError):
        log_grid(10.0, 1.0, 5)
    with pytest.raises(ValueError):
        log_grid(0.0, 1.0, 5)
    with pytest.raises(ValueError):
        FrequencyGrid((1.0, 1.0))
    g = default_grid()
    assert len(g) == 61
    assert g.as_array()[0] == pytest.approx(0.1)
    assert g.as_array()[-1] == pytest.approx(120.0)


def test_loglog_slope_of_power_law():
    f = np.geomspace(1, 100, 20)
    assert loglog_slope(f, 3 * f**2) == pytest.approx(2.0)


def test_unwrap_removes_jumps():
    out = unwrap_deg([170.0, -175.0, -160.0])
    np.testing.assert_allclose(out, [170.0, 185.0, 200.0])


@given(
    st.floats(0.01, 10.0),
    st.floats(0.0, 5.0),
    st.floats(0.01, 10.0),
    st.floats(0.01, 500.0),
)
def test_conjugate_symmetry_property(b0, b1, a0, f):
    tf = RationalTransferFunction((b0, b1), (a0, 1.0, 0.5))
    assert eval_tf(tf, -f) == pytest.approx(np.conj(eval_tf(tf, f)), rel=1e-12, abs=1e-15)


@given(st.floats(-80.0, 40.0), st.floats(-179.0, 180.0))
def test_gain_phase_round_trip(g_db, ph):
    g2, p2 = gain_phase(from_gain_phase(g_db, ph))
    assert g2 == pytest.approx(g_db, abs=1e-9)
    assert p2 == pytest.approx(ph, abs=1e-9)


@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_product_and_inverse(k, tau):
    a = RationalTransferFunction((k,), (1.0, tau))
    prod = a * a.inverse()
    for s in (0.3j, 2j):
        assert prod(s) == pytest.approx(1.0)
