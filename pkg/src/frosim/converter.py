"""Grid-feeding converter: L filter, averaged VSC, controllers, PLL.

The controller blocks are written as pure functions returning outputs and
state derivatives, so the engine can discretize each state with whichever
integrator its scheme assigns.  All functions accept floats or jax arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import jax.numpy as jnp
import numpy as np

from .network import OMEGA_BASE, A_OP, balanced, positive_sequence, zero_sequence

SQRT3_2 = math.sqrt(3.0) / 2.0
TWO_PI_3 = 2.0 * math.pi / 3.0

# state order inside one converter block
STATE_NAMES = (
    "i_A", "i_B", "i_C",
    "p_lag", "q_lag", "xi_d", "xi_q",
    "zeta_d", "zeta_q",
    "pll_int", "delta",
    "p_meas", "q_meas", "v_om_meas",
)
FILTER = slice(0, 3)
POWER_CONTROLLER = slice(3, 7)
CURRENT_CONTROLLER = slice(7, 9)
PLL = slice(9, 11)
MEASUREMENT = slice(11, 14)


@dataclass(frozen=True)
class ConverterParams:
    """Converter data; defaults are the test-system values."""

    l_f: float = 4.2441e-4
    p_ref: float = 1.0
    q_ref: float = 0.35
    t_pcon: float = 0.1
    t_qcon: float = 0.1
    k_p_iod: float = 1.3
    k_i_iod: float = 10.0
    k_p_ioq: float = 1.3
    k_i_ioq: float = 10.0
    k_p_vid: float = 0.25
    k_i_vid: float = 0.01
    k_p_viq: float = 0.25
    k_i_viq: float = 0.01
    k_p_pll: float = 150.0
    k_i_pll: float = 9000.0
    t_p: float = 0.02
    t_q: float = 0.02
    t_v: float = 0.02

    def __post_init__(self):
        if not self.l_f > 0.0:
            raise ValueError("l_f must be positive")
        for name in ("t_pcon", "t_qcon", "t_p", "t_q", "t_v"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


class Phasor(NamedTuple):
    d: float
    q: float

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        return cls(z.real, z.imag)

    def to_complex(self) -> complex:
        return complex(self.d, self.q)


def clarke(x_a, x_b, x_c):
    """In-phase and quadrature signals of a three-phase quantity."""
    x_in = (2.0 / 3.0) * (x_a - 0.5 * x_b - 0.5 * x_c)
    x_qu = (2.0 / 3.0) * SQRT3_2 * (x_b - x_c)
    return x_in, x_qu


def phase_shift(x_in, x_qu, delta_bar) -> Phasor:
    """Rotate (x_in + j x_qu) by -delta_bar into the device frame."""
    c, s = jnp.cos(delta_bar), jnp.sin(delta_bar)
    return Phasor(c * x_in + s * x_qu, c * x_qu - s * x_in)


def inverse_phase_shift(ph: Phasor, delta_bar):
    c, s = jnp.cos(delta_bar), jnp.sin(delta_bar)
    return c * ph.d - s * ph.q, s * ph.d + c * ph.q


def vsc_waveforms(v_ord: Phasor, delta_bar):
    """Balanced positive-sequence VSC voltages for a device-frame order."""
    # V_m cos(delta_bar + angle - k 2pi/3) = Re(V_ord e^{j(delta_bar - k 2pi/3)})
    out = []
    for shift in (0.0, -TWO_PI_3, TWO_PI_3):
        ang = delta_bar + shift
        out.append(v_ord.d * jnp.cos(ang) - v_ord.q * jnp.sin(ang))
    return tuple(out)


def l_filter_dynamics(v_vsc, v_term, l_f, dv_vsc=None, dv_term=None):
    """di/dt = (v_vsc - v_term)/l_f per phase; with voltage derivatives also d2i/dt2."""
    v_vsc, v_term = jnp.asarray(v_vsc), jnp.asarray(v_term)
    di = (v_vsc - v_term) / l_f
    if dv_vsc is None:
        return di
    return di, (jnp.asarray(dv_vsc) - jnp.asarray(dv_term)) / l_f


def power_controller_step(params: ConverterParams, p_meas, q_meas, states):
    """Reference lag followed by PI on the power error.

    ``states`` = (p_lag, q_lag, xi_d, xi_q).  Returns the current order and
    the four state derivatives.  The q axis is sign-flipped so that a
    positive reactive reference yields a negative q-axis current.
    """
    p_lag, q_lag, xi_d, xi_q = states
    e_d = p_lag - p_meas
    e_q = q_lag - q_meas
    i_ord = Phasor(
        params.k_p_iod * e_d + params.k_i_iod * xi_d,
        -(params.k_p_ioq * e_q + params.k_i_ioq * xi_q),
    )
    derivs = (
        (params.p_ref - p_lag) / params.t_pcon,
        (params.q_ref - q_lag) / params.t_qcon,
        e_d,
        e_q,
    )
    return i_ord, derivs


def current_controller_step(params: ConverterParams, i_ord: Phasor, i_meas: Phasor,
                            v_term: Phasor, states, omega: float = OMEGA_BASE):
    """PI current loop with terminal-voltage feed-forward and wL decoupling."""
    zeta_d, zeta_q = states
    e_d = i_ord.d - i_meas.d
    e_q = i_ord.q - i_meas.q
    u_d = params.k_p_vid * e_d + params.k_i_vid * zeta_d
    u_q = params.k_p_viq * e_q + params.k_i_viq * zeta_q
    xl = omega * params.l_f
    v_ord = Phasor(v_term.d - xl * i_meas.q + u_d, v_term.q + xl * i_meas.d + u_q)
    return v_ord, (e_d, e_q)


def pll_step(params: ConverterParams, v_oq, states, t, omega_syn: float = OMEGA_BASE):
    """PI on the terminal-voltage q component drives the phasor angle.

    ``states`` = (integrator, delta).  Returns delta_bar and derivatives.
    """
    integ, delta = states
    delta_bar = omega_syn * t + delta
    return delta_bar, (v_oq, params.k_p_pll * v_oq + params.k_i_pll * integ)


def power_precalc(v_o: Phasor, i_o: Phasor):
    p_pre = v_o.d * i_o.d + v_o.q * i_o.q
    q_pre = -v_o.d * i_o.q + v_o.q * i_o.d
    v_pre = jnp.sqrt(v_o.d * v_o.d + v_o.q * v_o.q)
    return p_pre, q_pre, v_pre


def measurement_step(params: ConverterParams, v_o: Phasor, i_o: Phasor, states):
    """Instantaneous P, Q, |V| followed by first-order low-pass filters."""
    p, q, vm = states
    p_pre, q_pre, v_pre = power_precalc(v_o, i_o)
    derivs = ((p_pre - p) / params.t_p, (q_pre - q) / params.t_q, (v_pre - vm) / params.t_v)
    return (p, q, vm), derivs


def converter_derivatives(params: ConverterParams, x, v_term, v_neutral, t,
                          omega: float = OMEGA_BASE):
    """All 14 state derivatives of one converter.

    ``x`` follows STATE_NAMES; ``v_term`` are the three terminal node voltages
    and ``v_neutral`` the floating VSC neutral voltage.
    """
    i_abc = x[FILTER]
    delta_bar = omega * t + x[10]
    v_o = phase_shift(*clarke(v_term[0], v_term[1], v_term[2]), delta_bar)
    i_o = phase_shift(*clarke(i_abc[0], i_abc[1], i_abc[2]), delta_bar)
    _, d_pll = pll_step(params, v_o.q, x[PLL], t, omega)
    i_ord, d_pc = power_controller_step(params, x[11], x[12], x[POWER_CONTROLLER])
    v_ord, d_cc = current_controller_step(params, i_ord, i_o, v_o, x[CURRENT_CONTROLLER], omega)
    v_vsc = jnp.stack(vsc_waveforms(v_ord, delta_bar)) + v_neutral
    d_filter = l_filter_dynamics(v_vsc, v_term, params.l_f)
    _, d_meas = measurement_step(params, v_o, i_o, x[MEASUREMENT])
    return jnp.concatenate([d_filter, jnp.stack(d_pc), jnp.stack(d_cc),
                            jnp.stack(d_pll), jnp.stack(d_meas)])


def initial_state(params: ConverterParams, v_term_phasors, omega: float = OMEGA_BASE):
    """Steady-state converter states for given terminal voltage phasors.

    The converter is assumed to inject a balanced positive-sequence current
    delivering (p_ref, q_ref) against the positive-sequence terminal voltage.
    Returns (states at t=0, balanced current phasors, neutral voltage phasor).
    """
    v_pos = positive_sequence(v_term_phasors)
    s = complex(params.p_ref, params.q_ref)
    i_pos = (s / v_pos).conjugate()
    i_abc = balanced(i_pos)
    delta = float(np.angle(v_pos))
    i_dq = i_pos * np.exp(-1j * delta)
    x = np.zeros(len(STATE_NAMES))
    x[FILTER] = i_abc.real
    x[3], x[4] = params.p_ref, params.q_ref
    x[5] = i_dq.real / params.k_i_iod
    x[6] = -i_dq.imag / params.k_i_ioq
    x[10] = delta
    x[11], x[12], x[13] = s.real, s.imag, abs(v_pos)
    return x, i_abc, zero_sequence(v_term_phasors)


def injection_phasors(params: ConverterParams, v_term_phasors) -> np.ndarray:
    v_pos = positive_sequence(v_term_phasors)
    return balanced((complex(params.p_ref, params.q_ref) / v_pos).conjugate())


__all__ = [
    "A_OP", "ConverterParams", "Phasor", "STATE_NAMES", "clarke", "phase_shift",
    "inverse_phase_shift", "vsc_waveforms", "l_filter_dynamics", "power_controller_step",
    "current_controller_step", "pll_step", "power_precalc", "measurement_step",
    "converter_derivatives", "initial_state", "injection_phasors",
]
