import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frosim import converter as conv
from frosim.converter import ConverterParams, Phasor
from frosim.integrators import IntegratorKind, coefficients
from frosim.network import OMEGA_BASE, balanced

P = ConverterParams()
finite = st.floats(-10.0, 10.0, allow_nan=False)
angle = st.floats(-20.0, 20.0, allow_nan=False)


def test_clarke_examples():
    assert conv.clarke(0.0, 0.0, 0.0) == (0.0, 0.0)
    x_in, x_qu = conv.clarke(1.0, 0.0, 0.0)
    assert x_in == pytest.approx(2.0 / 3.0) and x_qu == 0.0
    for th in np.linspace(0, 2 * math.pi, 9):
        x_in, x_qu = conv.clarke(math.cos(th), math.cos(th - 2 * math.pi / 3),
                                 math.cos(th + 2 * math.pi / 3))
        assert x_in == pytest.approx(math.cos(th), abs=1e-14)
        assert x_qu == pytest.approx(math.sin(th), abs=1e-14)


def test_phase_shift_examples():
    ph = conv.phase_shift(0.3, -0.7, 0.0)
    assert (float(ph.d), float(ph.q)) == (0.3, -0.7)
    ph = conv.phase_shift(1.0, 0.0, math.pi / 2)
    assert float(ph.d) == pytest.approx(0.0, abs=1e-15)
    assert float(ph.q) == pytest.approx(-1.0)


@settings(max_examples=100, deadline=None)
@given(finite, finite, angle)
def test_phase_shift_round_trip(x_in, x_qu, delta_bar):
    back = conv.inverse_phase_shift(conv.phase_shift(x_in, x_qu, delta_bar), delta_bar)
    assert float(back[0]) == pytest.approx(x_in, abs=1e-12)
    assert float(back[1]) == pytest.approx(x_qu, abs=1e-12)


def test_vsc_waveform_examples():
    np.testing.assert_allclose([float(v) for v in conv.vsc_waveforms(Phasor(1.0, 0.0), 0.0)],
                               [1.0, -0.5, -0.5], atol=1e-15)
    assert all(float(v) == 0.0 for v in conv.vsc_waveforms(Phasor(0.0, 0.0), 1.3))
    v_a = float(conv.vsc_waveforms(Phasor(0.8, 0.6), 0.3)[0])
    assert v_a == pytest.approx(1.0 * math.cos(0.3 + math.atan2(0.6, 0.8)), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(finite, finite, angle)
def test_vsc_clarke_phase_shift_recovers_order(d, q, delta_bar):
    wave = conv.vsc_waveforms(Phasor(d, q), delta_bar)
    assert abs(float(sum(wave))) <= 1e-12 * (1 + abs(d) + abs(q))
    ph = conv.phase_shift(*conv.clarke(*wave), delta_bar)
    assert float(ph.d) == pytest.approx(d, abs=1e-12)
    assert float(ph.q) == pytest.approx(q, abs=1e-12)


def test_power_precalc_identities():
    p, q, v = conv.power_precalc(Phasor(1.0, 0.0), Phasor(1.0, 0.0))
    assert (float(p), float(q), float(v)) == (1.0, 0.0, 1.0)
    p, q, _ = conv.power_precalc(Phasor(1.0, 0.0), Phasor(0.0, 1.0))
    assert (float(p), float(q)) == (0.0, -1.0)


def test_power_precalc_matches_complex_power():
    # V conj(I) on arbitrary phasors
    v, i = 0.9 + 0.2j, 0.4 - 0.7j
    p, q, vm = conv.power_precalc(Phasor(v.real, v.imag), Phasor(i.real, i.imag))
    s = v * np.conj(i)
    assert float(p) == pytest.approx(s.real) and float(q) == pytest.approx(s.imag)
    assert float(vm) == pytest.approx(abs(v))


def test_power_controller_zero_error():
    i_ord, d = conv.power_controller_step(P, 1.0, 0.35, (1.0, 0.35, 0.2, -0.1))
    assert i_ord.d == pytest.approx(P.k_i_iod * 0.2)
    assert i_ord.q == pytest.approx(-P.k_i_ioq * -0.1)
    assert d == pytest.approx((0.0, 0.0, 0.0, 0.0))


def test_power_controller_q_sign():
    i_ord, _ = conv.power_controller_step(P, 0.0, 0.0, (0.0, 0.35, 0.0, 0.0))
    assert i_ord.q < 0.0


@pytest.mark.parametrize("t", [0.0, 0.01, 0.05, 0.2, 0.5])
def test_power_controller_step_response(t):
    # closed form after a 0 -> 1 reference step with p_meas held at 0:
    # p_lag = 1 - e^{-t/T}, xi = t - T (1 - e^{-t/T}), i_d = k_p p_lag + k_i xi
    T = P.t_pcon
    p_lag = 1.0 - math.exp(-t / T)
    xi = t - T * (1.0 - math.exp(-t / T))
    i_ord, d = conv.power_controller_step(P, 0.0, 0.0, (p_lag, 0.0, xi, 0.0))
    assert d[0] == pytest.approx(math.exp(-t / T) / T)  # d/dt of the closed-form p_lag
    assert d[2] == pytest.approx(p_lag)                  # d/dt of the closed-form xi
    assert i_ord.d == pytest.approx(P.k_p_iod * p_lag + P.k_i_iod * xi)
    if t == 0.01:
        assert i_ord.d - P.k_i_iod * xi == pytest.approx(1.3 * p_lag)


def test_current_controller_feed_forward():
    v_ord, d = conv.current_controller_step(P, Phasor(0.0, 0.0), Phasor(0.0, 0.0),
                                            Phasor(1.0, 0.0), (0.0, 0.0))
    assert (v_ord.d, v_ord.q) == (1.0, 0.0)
    assert d == (0.0, 0.0)


def test_current_controller_decoupling():
    v_ord, _ = conv.current_controller_step(P, Phasor(1.0, 0.0), Phasor(1.0, 0.0),
                                            Phasor(1.0, 0.2), (0.0, 0.0))
    assert v_ord.q - 0.2 == pytest.approx(2 * math.pi * 60 * 4.2441e-4)
    assert v_ord.q - 0.2 == pytest.approx(0.16, abs=5e-5)


def test_pll_locked():
    for t in (0.0, 0.1, 1.7):
        delta_bar, d = conv.pll_step(P, 0.0, (0.0, 0.0), t)
        assert delta_bar == OMEGA_BASE * t
        assert d == (0.0, 0.0)


def test_pll_type2_loop_zero_steady_error():
    # linearized loop v_oq ~ V (theta - delta): characteristic s^2 + V kp s + V ki
    V = 1.1
    roots = np.roots([1.0, V * P.k_p_pll, V * P.k_i_pll])
    assert np.all(roots.real < 0)  # stable, and the double integrator removes phase offsets


def test_measurement_lag_step():
    # integrate the T_p lag with Integrator C from the model's own derivatives
    h, p = 1e-4, 0.0
    co = coefficients(IntegratorKind.C, h)
    for _ in range(int(round(0.02 / h))):
        _, (d0, _, _) = conv.measurement_step(P, Phasor(1.0, 0.0), Phasor(1.0, 0.0), (p, 0, 0))
        # p' = (1 - p)/T and p'' = -p'/T, so the C step is linear in p_t
        T = P.t_p
        p = (p + co.b0 / T + co.b_m1 * d0 - co.c0 / T ** 2 - co.c_m1 * d0 / T) / \
            (1 + co.b0 / T - co.c0 / T ** 2)
    assert p == pytest.approx(1.0 - math.exp(-1.0), abs=1e-3)
    assert p == pytest.approx(0.6321, abs=1e-3)


def test_l_filter():
    assert float(conv.l_filter_dynamics(0.3, 0.3, P.l_f)) == 0.0
    assert float(conv.l_filter_dynamics(0.01, 0.0, P.l_f)) == pytest.approx(23.562, abs=1e-3)
    di, ddi = conv.l_filter_dynamics(0.0, 0.0, P.l_f, 2.0, 1.0)
    assert float(ddi) == pytest.approx(1.0 / P.l_f)


def test_l_filter_phasor_identity():
    i = 0.8 - 0.4j
    dv = 1j * OMEGA_BASE * P.l_f * i
    assert abs(dv) == pytest.approx(OMEGA_BASE * P.l_f * abs(i))


def test_initial_state_is_equilibrium():
    v_term = balanced(1.1 * np.exp(0.4j)) * np.array([1.0, 0.98, 1.01])
    x, i_abc, v0 = conv.initial_state(P, v_term)
    # instantaneous evaluation at t = 0 with phasor waveforms
    v_n = v0.real
    d = np.asarray(conv.converter_derivatives(P, x, v_term.real, v_n, 0.0))
    # controller states are at rest; PLL is locked on the positive sequence
    v_pos = conv.positive_sequence(v_term)
    i_pos = np.conj(complex(P.p_ref, P.q_ref) / v_pos)
    i_dq = i_pos * np.exp(-1j * np.angle(v_pos))
    p, q, _ = conv.power_precalc(Phasor(abs(v_pos), 0.0), Phasor(i_dq.real, i_dq.imag))
    assert float(p) == pytest.approx(P.p_ref) and float(q) == pytest.approx(P.q_ref)
    np.testing.assert_allclose(d[3:9], 0.0, atol=1e-12)
    np.testing.assert_allclose(x[conv.FILTER], i_abc.real)


def test_params_validation():
    with pytest.raises(ValueError):
        ConverterParams(l_f=0.0)
    with pytest.raises(ValueError):
        ConverterParams(t_p=-1.0)
    assert "k_p_pll" in ConverterParams.field_names()
