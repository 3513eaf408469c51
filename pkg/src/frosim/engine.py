"""Fixed-step simultaneous solver for the network + converter DAE.

Every step solves one nonlinear system by Newton iteration.  Its unknowns
are the states x, their first derivatives, the second derivatives of the
states whose integrator needs them, the algebraic node voltages y and, when
second derivatives are in play, dy/dt.  The equations are

    xd  - f(t, x, y)                          (state equations)
    xdd - (f_t + f_x xd + f_y yd)             (chain rule, two-derivative states)
    g(t, x, y)                                (KCL / source constraints)
    g_t + g_x xd + g_y yd                     (time derivative of the above)
    x - x_prev - b0 xd - b_m1 xd_prev - c0 xdd - c_m1 xdd_prev

Derivative unknowns are scaled by h and h^2 internally so every residual is
in state units.  Jacobians and the chain-rule terms come from forward-mode
automatic differentiation.  The time loop runs as a compiled scan over
fixed-length chunks, so one compilation serves every step size.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402

from . import converter as conv  # noqa: E402
from .integrators import IntegratorKind, SolverConfig, coefficients  # noqa: E402
from .network import (  # noqa: E402
    OMEGA_BASE, PHASES, FaultElement, Network, NetworkError, assemble_network_equations,
    branch_dynamics,
)

logger = logging.getLogger(__name__)

CHUNK = 500
DIVERGENCE_NORM = 1e6
N_SWAP = 2

K = IntegratorKind


class Scheme(enum.Enum):
    SCHEME1 = "scheme1"
    SCHEME2 = "scheme2"
    EMT = "emt"


# state classes: utility-frequency currents, slow states, power-controller states
AC, SLOW, POWER = "ac", "slow", "power"

_ASSIGNMENT = {
    Scheme.SCHEME1: {AC: (K.A, K.B), SLOW: (K.C, K.D), POWER: (K.C, K.D)},
    Scheme.SCHEME2: {AC: (K.A, K.B), SLOW: (K.C, K.D), POWER: (K.TRAPEZOIDAL, K.BACKWARD_EULER)},
    Scheme.EMT: {c: (K.TRAPEZOIDAL, K.BACKWARD_EULER) for c in (AC, SLOW, POWER)},
}


def assignment(scheme: Scheme, state_class: str, replaced: bool = False) -> IntegratorKind:
    """Integrator used for a state class; ``replaced`` right after a discontinuity."""
    return _ASSIGNMENT[Scheme(scheme)][state_class][int(replaced)]


class DivergenceError(RuntimeError):
    def __init__(self, time: float, step: int, residual: float):
        self.time, self.step, self.residual = time, step, residual
        super().__init__(
            f"Newton iteration failed at t = {time:.6g} s (step {step}), "
            f"residual norm {residual:.3e}"
        )


@dataclass(frozen=True)
class Event:
    time: float
    action: str  # "fault_apply" | "fault_clear"
    bus: str
    phase: int
    r_fault: float | None = None

    def __post_init__(self):
        if self.action not in ("fault_apply", "fault_clear"):
            raise ValueError(f"unknown event action {self.action!r}")
        if isinstance(self.phase, str):
            object.__setattr__(self, "phase", PHASES.index(self.phase.upper()))
        if self.action == "fault_apply" and not (self.r_fault and self.r_fault > 0.0):
            raise ValueError("fault_apply needs a positive r_fault")
        if self.time < 0.0:
            raise ValueError("event time must be non-negative")


@dataclass
class ConverterSpec:
    bus: str
    params: conv.ConverterParams = field(default_factory=conv.ConverterParams)
    name: str = "converter"


@dataclass
class TimeSeries:
    """Uniformly sampled simulation output; row k is at t = k*h."""

    h: float
    columns: list[str]
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    __getitem__ = column

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def select(self, names: Sequence[str]) -> "TimeSeries":
        idx = [self.columns.index(n) for n in names]
        return TimeSeries(self.h, list(names), self.data[:, idx].copy(), dict(self.meta))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            # repr gives the shortest round-trip decimal form
            for row in self.data.tolist():
                w.writerow([repr(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader if row])
        if "t" not in header:
            raise ValueError(f"{path}: trace has no 't' column")
        if data.ndim != 2 or data.shape[0] < 2:
            raise ValueError(f"{path}: trace needs at least two rows")
        t = data[:, header.index("t")]
        return cls(float(t[1] - t[0]), header, data)


TRACE_COLUMNS = ["t", "v_A", "v_B", "v_C", "p_meas", "q_meas", "v_om_meas", "delta",
                 "i_A", "i_B", "i_C"]
DIAGNOSTIC_COLUMNS = ["di_A", "ddi_A", "iterations", "residual", "kcl_residual",
                      "disc_residual"]


class System:
    """State/algebraic layout and equations of a network with converters.

    State order: branch currents, inductive load currents, converter blocks.
    Algebraic order: node voltages (three per bus), converter neutrals.
    """

    def __init__(self, network: Network, converters: Sequence[ConverterSpec] = (),
                 fault_slots: Sequence[tuple[str, int]] = (), monitor_bus: str | None = None):
        self.converters = list(converters)
        network.validate(extra_buses=[c.bus for c in self.converters])
        faults = list(network.faults)
        known = {(f.bus, f.phase) for f in faults}
        for bus, phase in fault_slots:
            if (bus, phase) not in known:
                faults.append(FaultElement(bus, phase, 1.0, active=False))
                known.add((bus, phase))
        self.network = Network(network.buses, network.branches, network.loads,
                               network.sources, faults, network.omega)
        self.omega = network.omega
        self.monitor_bus = monitor_bus or (self.converters[0].bus if self.converters
                                           else network.buses[0].id)
        self.network.bus_index(self.monitor_bus)

        names, classes = [], []
        self._branch_slices = []
        for k, br in enumerate(network.branches):
            self._branch_slices.append(len(names))
            for ph in PHASES:
                names.append(f"branch{k}.i_{ph}")
                classes.append(AC)
        self._load_slices = []
        for k, ld in enumerate(network.loads):
            if ld.inductive:
                self._load_slices.append(len(names))
                for ph in PHASES:
                    names.append(f"load{k}.i_{ph}")
                    classes.append(AC)
            else:
                self._load_slices.append(None)
        self._conv_slices = []
        for c in self.converters:
            self._conv_slices.append(len(names))
            for s in conv.STATE_NAMES:
                names.append(f"{c.name}.{s}")
            classes += [AC] * 3 + [POWER] * 4 + [SLOW] * 7
        self.state_names, self.state_classes = names, classes
        self.alg_names = [f"{b.id}.v_{ph}" for b in network.buses for ph in PHASES]
        self.alg_names += [f"{c.name}.v_n" for c in self.converters]
        self.n_states, self.n_alg = len(names), len(self.alg_names)
        self.n_faults = len(faults)
        self._compiled = {}

    # -- equations ------------------------------------------------------------

    def _nodes(self, bus):
        return self.network.nodes(bus)

    def f(self, t, x, y, gf):
        """State derivatives."""
        del gf
        parts = []
        for br, s in zip(self.network.branches, self._branch_slices):
            parts.append(branch_dynamics(br.r, br.inductance(OMEGA_BASE), x[s:s + 3],
                                         y[self._nodes(br.from_bus)], y[self._nodes(br.to_bus)]))
        for ld, s in zip(self.network.loads, self._load_slices):
            if s is not None:
                r, l = ld.r_l(OMEGA_BASE)
                if ld.connection == "parallel":
                    r = np.zeros(3)
                parts.append(branch_dynamics(r, l, x[s:s + 3], y[self._nodes(ld.bus)], 0.0))
        nn = self.network.n_nodes
        for k, (c, s) in enumerate(zip(self.converters, self._conv_slices)):
            parts.append(conv.converter_derivatives(
                c.params, x[s:s + 14], y[self._nodes(c.bus)], y[nn + k], t, self.omega))
        if not parts:
            return jnp.zeros(0)
        return jnp.concatenate(parts)

    def g(self, t, x, y, gf):
        """Algebraic residuals: node KCL/source constraints, then neutrals."""
        nn = self.network.n_nodes
        inj = jnp.zeros(nn, dtype=y.dtype)
        for br, s in zip(self.network.branches, self._branch_slices):
            inj = inj.at[self._nodes(br.from_bus)].add(-x[s:s + 3])
            inj = inj.at[self._nodes(br.to_bus)].add(x[s:s + 3])
        for ld, s in zip(self.network.loads, self._load_slices):
            nodes = self._nodes(ld.bus)
            if s is not None:
                inj = inj.at[nodes].add(-x[s:s + 3])
            if s is None or ld.connection == "parallel":
                r, _ = ld.r_l(OMEGA_BASE)
                g_load = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
                inj = inj.at[nodes].add(-g_load * y[nodes])
        neutrals = []
        for c, s in zip(self.converters, self._conv_slices):
            inj = inj.at[self._nodes(c.bus)].add(x[s:s + 3])
            neutrals.append(jnp.sum(x[s:s + 3]))
        res = assemble_network_equations(self.network, y[:nn], inj, t, fault_conductance=gf)
        if neutrals:
            res = jnp.concatenate([res, jnp.stack(neutrals)])
        return res

    def record(self, x, y, xd, xdd):
        """Monitored signals in TRACE_COLUMNS order (without t) plus di_A, ddi_A."""
        nodes = self._nodes(self.monitor_bus)
        if self.converters:
            s = self._conv_slices[0]
            cx = x[s:s + 14]
            vals = [y[nodes], cx[11:14], cx[10:11], cx[0:3], xd[s:s + 1], xdd[s:s + 1]]
        else:
            vals = [y[nodes], jnp.full(7, jnp.nan), jnp.full(2, jnp.nan)]
        return jnp.concatenate(vals)

    # -- initialization ---------------------------------------------------------

    def initial_state(self, fault_conductance=None):
        """Phasor-domain steady state at t = 0.

        Returns x0, xd0, y0, yd0 (derivatives seeded from the phasors).
        """
        net = self.network
        gf = np.zeros(self.n_faults) if fault_conductance is None else np.asarray(fault_conductance)
        v = net.steady_state(fault_conductance=gf)
        for _ in range(200):
            inj = {}
            for c in self.converters:
                inj[c.bus] = inj.get(c.bus, 0) + conv.injection_phasors(c.params, v[self._nodes(c.bus)])
            v_new = net.steady_state(inj, fault_conductance=gf)
            done = np.max(np.abs(v_new - v)) < 1e-15
            v = v_new
            if done:
                break
        x = np.zeros(self.n_states)
        xd = np.zeros(self.n_states)
        w = self.omega
        for cur, s in zip(net.branch_current_phasors(v), self._branch_slices):
            x[s:s + 3], xd[s:s + 3] = cur.real, (1j * w * cur).real
        for cur, s in zip(net.load_current_phasors(v), self._load_slices):
            if s is not None:
                x[s:s + 3], xd[s:s + 3] = cur.real, (1j * w * cur).real
        neutral = []
        for c, s in zip(self.converters, self._conv_slices):
            cx, i_abc, v0 = conv.initial_state(c.params, v[self._nodes(c.bus)], w)
            x[s:s + 14] = cx
            neutral.append(v0)
        vy = np.concatenate([v, np.array(neutral, dtype=complex)])
        y, yd = vy.real.copy(), (1j * w * vy).real
        # slow states: exact derivatives from the model at the seeded point
        fx = np.asarray(self.f(0.0, jnp.asarray(x), jnp.asarray(y), jnp.asarray(gf)))
        for c, s in zip(self.converters, self._conv_slices):
            xd[s:s + 3] = (1j * w * i_abc).real
            xd[s + 3:s + 14] = fx[s + 3:s + 14]
        return x, xd, y, yd


def second_derivative(f, t, x, xd, u, ud):
    """Chain-rule second derivative f_t + f_x xd + f_u ud of ``xd = f(t, x, u)``."""
    t = jnp.asarray(t, dtype=float)
    _, xdd = jax.jvp(f, (t, jnp.asarray(x, dtype=float), jnp.asarray(u, dtype=float)),
                     (jnp.ones_like(t), jnp.asarray(xd, dtype=float), jnp.asarray(ud, dtype=float)))
    return xdd


def _scaled_coefficients(kinds: Sequence[IntegratorKind], h: float, omega: float) -> np.ndarray:
    out = np.empty((4, len(kinds)))
    for j, kind in enumerate(kinds):
        b0, b1, c0, c1 = coefficients(kind, h, omega).as_tuple()
        out[:, j] = (b0 / h, b1 / h, c0 / (h * h), c1 / (h * h))
    return out


def _build_chunk(system: System, so_idx: np.ndarray, has_yd: bool, copies: int):
    """Compile-ready function advancing CHUNK steps."""
    n, m, nS = system.n_states, system.n_alg, len(so_idx)
    so_idx = jnp.asarray(so_idx, dtype=int)
    f, g = system.f, system.g
    sizes = [n, n, nS, m, m if has_yd else 0]
    offsets = np.cumsum([0] + sizes)

    def split(z):
        return [z[offsets[k]:offsets[k + 1]] for k in range(5)]

    def residual(z, t, h, prev, co, gf):
        x, u, w, y, v = split(z)
        xp, up, wp, yp, vp = prev
        tt = jnp.asarray(t, dtype=float)
        if nS:
            if not has_yd:
                v = jnp.zeros(m)
            fx, hxdd = jax.jvp(lambda a, b, c: f(a, b, c, gf), (tt, x, y), (h, u, v))
            parts = [u - h * fx, w - h * hxdd[so_idx]]
        else:
            parts = [u - h * f(tt, x, y, gf), jnp.zeros(0)]
        parts.append(g(tt, x, y, gf))
        if has_yd:
            _, hgd = jax.jvp(lambda a, b, c: g(a, b, c, gf), (tt, x, y), (h, u, v))
            parts.append(hgd)
        wfull = jnp.zeros(n).at[so_idx].set(w) if nS else jnp.zeros(n)
        parts.append(x - xp - co[0] * u - co[1] * up - co[2] * wfull - co[3] * wp)
        return jnp.concatenate(parts)

    jac = jax.jacfwd(residual)

    def newton(z0, t, h, prev, co, gf, tol, max_iter):
        r0 = residual(z0, t, h, prev, co, gf)

        def cond(c):
            _, r, k = c
            nrm = jnp.max(jnp.abs(r))
            return (k < max_iter) & (nrm >= tol) & (nrm < DIVERGENCE_NORM)

        def body(c):
            z, r, k = c
            z = z - jnp.linalg.solve(jac(z, t, h, prev, co, gf), r)
            return z, residual(z, t, h, prev, co, gf), k + 1

        return jax.lax.while_loop(cond, body, (z0, r0, 0))

    batched_newton = jax.vmap(newton, in_axes=(0, None, None, 0, None, None, None, None))
    record = jax.vmap(system.record)

    def one_step(state, k, swap, gf, h, co_nom, co_rep, tol, max_iter):
        x, u, w, y, v = state
        t = k * h
        co = jnp.where(swap, co_rep, co_nom)
        z0 = jnp.concatenate([x, u, w[:, so_idx], y, v], axis=1) if has_yd else \
            jnp.concatenate([x, u, w[:, so_idx], y], axis=1)
        z, r, iters = batched_newton(z0, t, h, state, co, gf, tol, max_iter)
        parts = jax.vmap(split)(z)
        xn, un, wS, yn = parts[0], parts[1], parts[2], parts[3]
        vn = parts[4] if has_yd else v
        wn = jnp.zeros_like(w).at[:, so_idx].set(wS) if nS else w
        nrm = jnp.max(jnp.abs(r))
        ok = jnp.all(jnp.isfinite(r)) & (nrm < tol)
        kcl = jnp.max(jnp.abs(r[:, offsets[3]:offsets[3] + m]))
        disc = jnp.max(jnp.abs(r[:, -n:]))
        rec = record(xn, yn, un / h, wn / (h * h))[0]
        out = jnp.concatenate([rec, jnp.stack([jnp.max(iters).astype(float), nrm, kcl, disc])])
        return (xn, un, wn, yn, vn), ok, nrm, out

    n_out = len(TRACE_COLUMNS) - 1 + len(DIAGNOSTIC_COLUMNS)

    def chunk(carry, xs, h, co_nom, co_rep, tol, max_iter):
        def body(c, step_in):
            state, failed, fail_k, fail_norm = c
            k, swap, gf, active = step_in

            def run(_):
                new, ok, nrm, out = one_step(state, k, swap, gf, h, co_nom, co_rep, tol, max_iter)
                bad = ~ok
                return ((jax.tree_util.tree_map(lambda a, b: jnp.where(bad, a, b), state, new),
                         bad, jnp.where(bad, k, fail_k), jnp.where(bad, nrm, fail_norm)), out)

            def skip(_):
                return (state, failed, fail_k, fail_norm), jnp.full(n_out, jnp.nan)

            return jax.lax.cond(active & ~failed, run, skip, None)

        return jax.lax.scan(body, carry, xs)

    return jax.jit(chunk)


class Simulator:
    """One scenario run configuration: system, scheme, solver settings, events."""

    def __init__(self, system: System, scheme: Scheme, config: SolverConfig,
                 events: Sequence[Event] = (), swap: bool = True, copies: int = 1,
                 swap_steps: int = N_SWAP):
        self.system = system
        self.scheme = Scheme(scheme)
        self.config = config
        self.events = sorted(events, key=lambda e: e.time)
        self.swap = swap
        self.swap_steps = swap_steps
        if copies < 1:
            raise ValueError("copies must be >= 1")
        self.copies = copies
        self._slot = {(f.bus, f.phase): k for k, f in enumerate(system.network.faults)}
        for ev in self.events:
            if (ev.bus, ev.phase) not in self._slot:
                raise NetworkError(f"event refers to fault slot {ev.bus}/{ev.phase} "
                                   "unknown to the system")
        self.kinds_nominal = [assignment(self.scheme, c) for c in system.state_classes]
        self.kinds_replaced = [assignment(self.scheme, c, True) for c in system.state_classes]
        so = [j for j, (a, b) in enumerate(zip(self.kinds_nominal, self.kinds_replaced))
              if a.second_order or b.second_order]
        self.so_idx = np.array(so, dtype=int)
        self.has_yd = len(so) > 0

    # -- schedule ---------------------------------------------------------------

    def n_steps(self, duration: float) -> int:
        n = int(round(duration / self.config.h))
        if n < 1 or abs(n * self.config.h - duration) > 1e-9 * max(duration, 1.0):
            raise ValueError(f"duration {duration} is not a multiple of h = {self.config.h}")
        return n

    def event_steps(self) -> list[int]:
        """Grid index of each event; it acts from the following step on."""
        return [int(round(ev.time / self.config.h)) for ev in self.events]

    def schedule(self, n_steps: int):
        """Per-step replacement flags and fault conductances for steps 1..n."""
        gf0 = np.array([1.0 / f.r_fault if f.active else 0.0 for f in self.system.network.faults])
        swap = np.zeros(n_steps + 1, dtype=bool)
        gf = np.tile(gf0, (n_steps + 1, 1))
        for ev, ke in zip(self.events, self.event_steps()):
            if ke >= n_steps:
                continue
            slot = self._slot[(ev.bus, ev.phase)]
            gf[ke + 1:, slot] = 1.0 / ev.r_fault if ev.action == "fault_apply" else 0.0
            if self.swap:
                swap[ke + 1:ke + 1 + self.swap_steps] = True
        return swap[1:], gf[1:], gf0

    def kinds_at(self, step: int, n_steps: int | None = None) -> list[IntegratorKind]:
        """Integrator of every state for the step computing t = step*h."""
        n_steps = n_steps or step
        swap, _, _ = self.schedule(max(n_steps, step))
        return self.kinds_replaced if swap[step - 1] else self.kinds_nominal

    # -- running ------------------------------------------------------------------

    def _chunk_fn(self):
        key = (tuple(self.so_idx), self.has_yd, self.copies)
        fn = self.system._compiled.get(key)
        if fn is None:
            fn = _build_chunk(self.system, self.so_idx, self.has_yd, self.copies)
            self.system._compiled[key] = fn
        return fn

    def initial_conditions(self):
        """Batched (x, h*xd, h^2*xdd, y, h*yd) at t = 0 plus the record row."""
        _, _, gf0 = self.schedule(1)
        x, xd, y, yd = self.system.initial_state(gf0)
        h = self.config.h
        xdd = np.asarray(second_derivative(
            lambda t, xx, yy: self.system.f(t, xx, yy, gf0), 0.0, x, xd, y, yd))
        if not self.has_yd:
            xdd = np.zeros_like(xdd)
        state = tuple(np.tile(a, (self.copies, 1)) for a in (x, h * xd, h * h * xdd, y, h * yd))
        rec = np.asarray(self.system.record(jnp.asarray(x), jnp.asarray(y), jnp.asarray(xd),
                                            jnp.asarray(xdd)))
        return state, rec

    def _args(self):
        h = self.config.h
        co_nom = _scaled_coefficients(self.kinds_nominal, h, self.config.omega_select)
        co_rep = _scaled_coefficients(self.kinds_replaced, h, self.config.omega_select)
        return (h, co_nom, co_rep, self.config.newton_tol, self.config.max_iter)

    def warmup(self):
        """Trigger compilation without advancing any real state."""
        state, _ = self.initial_conditions()
        xs = (np.arange(1, CHUNK + 1), np.zeros(CHUNK, bool),
              np.zeros((CHUNK, self.system.n_faults)), np.zeros(CHUNK, bool))
        carry = (state, False, 0, 0.0)
        out = self._chunk_fn()(carry, xs, *self._args())
        jax.block_until_ready(out)

    def prepare(self, duration: float) -> dict:
        """Initial conditions and padded per-step inputs for a run of ``duration``."""
        n = self.n_steps(duration)
        swap, gf, _ = self.schedule(n)
        state, rec0 = self.initial_conditions()
        n_pad = -(-n // CHUNK) * CHUNK
        swap_p = np.zeros(n_pad, bool)
        swap_p[:n] = swap
        gf_p = np.zeros((n_pad, self.system.n_faults))
        gf_p[:n] = gf
        return {"n": n, "state": state, "rec0": rec0, "ks": np.arange(1, n_pad + 1),
                "swap": swap_p, "gf": gf_p, "active": np.arange(n_pad) < n}

    def integrate(self, plan: dict) -> np.ndarray:
        """Step loop only; returns the raw output rows for steps 1..n."""
        h, n = self.config.h, plan["n"]
        fn = self._chunk_fn()
        args = self._args()
        carry = (tuple(jnp.asarray(a) for a in plan["state"]), jnp.asarray(False),
                 jnp.asarray(0), jnp.asarray(0.0))
        outs = []
        for s in range(0, len(plan["ks"]), CHUNK):
            sl = slice(s, s + CHUNK)
            carry, out = fn(carry, (plan["ks"][sl], plan["swap"][sl], plan["gf"][sl],
                                    plan["active"][sl]), *args)
            outs.append(np.asarray(out))
            if bool(carry[1]):
                k = int(carry[2])
                raise DivergenceError(k * h, k, float(carry[3]))
        self.final_state = carry[0]
        return np.concatenate(outs)[:n]

    def run(self, duration: float) -> TimeSeries:
        plan = self.prepare(duration)
        body = self.integrate(plan)
        h, n = self.config.h, plan["n"]
        first = np.concatenate([[0.0], plan["rec0"], [0.0, 0.0, 0.0, 0.0]])
        t = np.arange(1, n + 1) * h
        data = np.vstack([first, np.column_stack([t, body])])
        return TimeSeries(h, TRACE_COLUMNS + DIAGNOSTIC_COLUMNS, data,
                          {"scheme": self.scheme.value, "copies": self.copies})

    def step(self, state, k: int, swap: bool = False, gf=None):
        """Advance one batched state from t = (k-1)h to t = kh.

        Returns (new_state, converged, iterations).
        """
        fn = self._chunk_fn()
        gf = np.zeros(self.system.n_faults) if gf is None else np.asarray(gf, float)
        xs = (np.arange(k, k + CHUNK), np.full(CHUNK, swap), np.tile(gf, (CHUNK, 1)),
              np.arange(CHUNK) == 0)
        carry = (tuple(jnp.asarray(a) for a in state), jnp.asarray(False), jnp.asarray(0),
                 jnp.asarray(0.0))
        carry, out = fn(carry, xs, *self._args())
        return tuple(np.asarray(a) for a in carry[0]), not bool(carry[1]), int(out[0, -4])
