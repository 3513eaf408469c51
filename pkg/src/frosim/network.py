"""Unbalanced three-phase network in per unit, instantaneous domain.

Quantities are peak phase values; a phasor X stands for ``Re(X e^{j w t})``.
Every bus owns three nodes (phases A, B, C).  Branches are series R-L
elements whose currents are states.  Loads are R-L to ground, either in
series or as R || L; their inductor currents are states as well.  Faults
are resistors to ground and ideal sources pin their nodes to a cosine.
Loads, faults and sources are wye-grounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import jax.numpy as jnp
import numpy as np

OMEGA_BASE = 2.0 * math.pi * 60.0
PHASES = ("A", "B", "C")
# positive-sequence operator a = e^{j 2pi/3}
A_OP = complex(-0.5, math.sqrt(3.0) / 2.0)


class NetworkError(ValueError):
    """Raised for structurally invalid networks."""


def _three(values, name) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in values)
    if len(vals) != 3:
        raise NetworkError(f"{name} needs three per-phase values, got {len(vals)}")
    return vals


@dataclass
class Bus:
    id: str

    def node(self, phase: int) -> str:
        return f"{self.id}.{PHASES[phase]}"


@dataclass
class Branch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    name: str = ""

    def __post_init__(self):
        if self.r < 0.0 or not self.x > 0.0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: need r >= 0 and x > 0")

    def inductance(self, omega: float = OMEGA_BASE) -> float:
        return self.x / omega


@dataclass
class ConstantImpedanceLoad:
    """Per-phase constant impedance sized at 1.0 p.u. voltage magnitude.

    ``Z = |V|^2 / S*`` realized either as a series R-L to ground or as the
    equivalent parallel R || L (``G = P``, ``1/(w L) = Q``).  Both draw the
    nominal S at 1.0 p.u.; they differ only in transients.
    """

    bus: str
    p_phase: tuple[float, float, float]
    q_phase: tuple[float, float, float]
    name: str = ""
    connection: str = "parallel"

    def __post_init__(self):
        self.p_phase = _three(self.p_phase, "p_phase")
        self.q_phase = _three(self.q_phase, "q_phase")
        for p, q in zip(self.p_phase, self.q_phase):
            if p < 0.0 or q < 0.0 or p * p + q * q == 0.0:
                raise NetworkError(f"load at {self.bus}: need P >= 0, Q >= 0, S != 0")
        if self.connection not in ("series", "parallel"):
            raise NetworkError(f"load connection must be 'series' or 'parallel', "
                               f"got {self.connection!r}")
        if self.connection == "parallel" and not all(p > 0.0 for p in self.p_phase) \
                and any(p > 0.0 for p in self.p_phase):
            raise NetworkError("parallel load: P must be positive on all phases or none")

    def impedance(self) -> list[complex]:
        return [1.0 / complex(p, -q) for p, q in zip(self.p_phase, self.q_phase)]

    def r_l(self, omega: float = OMEGA_BASE) -> tuple[np.ndarray, np.ndarray]:
        """Per-phase (r, l) of the chosen realization; 0 marks a missing element."""
        if self.connection == "series":
            z = self.impedance()
            return np.array([zz.real for zz in z]), np.array([zz.imag / omega for zz in z])
        r = np.array([1.0 / p if p > 0.0 else 0.0 for p in self.p_phase])
        l = np.array([1.0 / (omega * q) if q > 0.0 else 0.0 for q in self.q_phase])
        return r, l

    def admittance(self, omega: float = OMEGA_BASE) -> np.ndarray:
        """Per-phase admittance of the realization at ``omega``."""
        r, l = self.r_l(OMEGA_BASE)
        if self.connection == "series":
            return 1.0 / (r + 1j * omega * l)
        y = np.zeros(3, dtype=complex)
        y[r > 0] += 1.0 / r[r > 0]
        y[l > 0] += 1.0 / (1j * omega * l[l > 0])
        return y

    @property
    def inductive(self) -> bool:
        """True when the load carries inductor-current states."""
        return all(q > 0.0 for q in self.q_phase)

    @property
    def resistive_path(self) -> bool:
        """True when a resistor connects the nodes directly to ground."""
        return self.connection == "parallel" and all(p > 0.0 for p in self.p_phase) \
            or not self.inductive


@dataclass
class IdealSource:
    bus: str
    magnitude: tuple[float, float, float]
    angle_deg: tuple[float, float, float]
    name: str = ""

    def __post_init__(self):
        self.magnitude = _three(self.magnitude, "magnitude")
        self.angle_deg = _three(self.angle_deg, "angle_deg")

    def phasors(self) -> np.ndarray:
        return np.array([m * np.exp(1j * math.radians(a))
                         for m, a in zip(self.magnitude, self.angle_deg)])

    def waveform(self, t, omega: float = OMEGA_BASE):
        mag = jnp.asarray(self.magnitude)
        ang = jnp.deg2rad(jnp.asarray(self.angle_deg))
        return mag * jnp.cos(omega * t + ang)


@dataclass
class FaultElement:
    bus: str
    phase: int
    r_fault: float
    active: bool = False

    def __post_init__(self):
        if isinstance(self.phase, str):
            self.phase = PHASES.index(self.phase.upper())
        if not self.r_fault > 0.0:
            raise NetworkError("fault resistance must be positive")


@dataclass
class Network:
    buses: list[Bus]
    branches: list[Branch] = field(default_factory=list)
    loads: list[ConstantImpedanceLoad] = field(default_factory=list)
    sources: list[IdealSource] = field(default_factory=list)
    faults: list[FaultElement] = field(default_factory=list)
    omega: float = OMEGA_BASE

    def __post_init__(self):
        self._index = {}
        for k, bus in enumerate(self.buses):
            if bus.id in self._index:
                raise NetworkError(f"duplicate bus id {bus.id!r}")
            self._index[bus.id] = k

    @property
    def n_nodes(self) -> int:
        return 3 * len(self.buses)

    def bus_index(self, bus_id: str) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus {bus_id!r}") from None

    def nodes(self, bus_id: str) -> np.ndarray:
        k = self.bus_index(bus_id)
        return np.arange(3 * k, 3 * k + 3)

    def source_nodes(self) -> np.ndarray:
        if not self.sources:
            return np.zeros(0, dtype=int)
        return np.concatenate([self.nodes(s.bus) for s in self.sources])

    def validate(self, extra_buses: Sequence[str] = ()):
        """Check references and that every bus has a path to a source or ground."""
        for elem in (*self.branches, *self.loads, *self.sources, *self.faults):
            for bus_id in ((elem.from_bus, elem.to_bus) if isinstance(elem, Branch) else (elem.bus,)):
                self.bus_index(bus_id)
        for bus_id in extra_buses:
            self.bus_index(bus_id)
        src_buses = [s.bus for s in self.sources]
        if len(set(src_buses)) != len(src_buses):
            raise NetworkError("at most one ideal source per bus")
        if not self.sources:
            raise NetworkError("network needs at least one ideal source")
        # connectivity through branches to a source bus
        adj = {b.id: set() for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        reached, todo = set(src_buses), list(src_buses)
        while todo:
            for nb in adj[todo.pop()]:
                if nb not in reached:
                    reached.add(nb)
                    todo.append(nb)
        grounded = {ld.bus for ld in self.loads}
        for bus in self.buses:
            if bus.id not in reached and bus.id not in grounded:
                raise NetworkError(f"bus {bus.id!r} has no path to a source or ground")

    # -- phasor domain -----------------------------------------------------

    def fault_conductances(self) -> np.ndarray:
        return np.array([1.0 / f.r_fault if f.active else 0.0 for f in self.faults])

    def steady_state(self, injections: dict[str, np.ndarray] | None = None,
                     fault_conductance=None) -> np.ndarray:
        """Complex nodal solve at the base frequency.

        ``injections`` maps bus id to three current phasors injected into the
        bus nodes (e.g. converters).  Returns the phasors of all node voltages.
        """
        if fault_conductance is None:
            fault_conductance = self.fault_conductances()
        n = self.n_nodes
        Y = np.zeros((n, n), dtype=complex)
        I = np.zeros(n, dtype=complex)
        w = self.omega
        for br in self.branches:
            y = 1.0 / complex(br.r, br.x * w / OMEGA_BASE)
            for a, b in zip(self.nodes(br.from_bus), self.nodes(br.to_bus)):
                Y[a, a] += y
                Y[b, b] += y
                Y[a, b] -= y
                Y[b, a] -= y
        for ld in self.loads:
            for node, yy in zip(self.nodes(ld.bus), ld.admittance(w)):
                Y[node, node] += yy
        for ft, gf in zip(self.faults, fault_conductance):
            node = self.nodes(ft.bus)[ft.phase]
            Y[node, node] += gf
        for bus_id, inj in (injections or {}).items():
            I[self.nodes(bus_id)] += inj

        fixed = self.source_nodes()
        v = np.zeros(n, dtype=complex)
        for src in self.sources:
            v[self.nodes(src.bus)] = src.phasors()
        free = np.setdiff1d(np.arange(n), fixed)
        rhs = I[free] - Y[np.ix_(free, fixed)] @ v[fixed]
        v[free] = np.linalg.solve(Y[np.ix_(free, free)], rhs)
        return v

    def branch_current_phasors(self, v: np.ndarray) -> list[np.ndarray]:
        out = []
        for br in self.branches:
            z = complex(br.r, br.x * self.omega / OMEGA_BASE)
            out.append((v[self.nodes(br.from_bus)] - v[self.nodes(br.to_bus)]) / z)
        return out

    def load_current_phasors(self, v: np.ndarray) -> list[np.ndarray]:
        out = []
        for ld in self.loads:
            r, l = ld.r_l(OMEGA_BASE)
            vv = v[self.nodes(ld.bus)]
            if ld.connection == "series":
                out.append(vv / (r + 1j * self.omega * l))
            else:
                # inductor branch only; a missing inductor carries nothing
                safe = np.where(l > 0.0, l, 1.0)
                out.append(np.where(l > 0.0, vv / (1j * self.omega * safe), 0.0))
        return out


def branch_dynamics(r, l, i, v_from, v_to, dv_from=None, dv_to=None):
    """Series R-L current derivatives per phase.

    Returns ``di/dt`` and, when the terminal voltage derivatives are given,
    also ``d2i/dt2 = (dv_from - dv_to - r*di/dt)/l``.
    """
    di = (v_from - v_to - r * i) / l
    if dv_from is None:
        return di
    return di, (dv_from - dv_to - r * di) / l


def assemble_network_equations(network: Network, node_voltages, device_injections, t,
                               fault_conductance=None):
    """KCL and source-constraint residuals, one per node.

    ``device_injections`` is the net current injected into every node by the
    state-carrying elements (branches, loads, converters).  Fault currents are
    added here, with conductances taken from ``fault_conductance`` when given
    and from the elements' ``active`` flags otherwise.  Source nodes get
    ``v - v_source(t)`` instead of KCL.
    """
    v = jnp.asarray(node_voltages, dtype=float)
    res = jnp.asarray(device_injections, dtype=float)
    if fault_conductance is None:
        fault_conductance = network.fault_conductances()
    for k, ft in enumerate(network.faults):
        node = int(network.nodes(ft.bus)[ft.phase])
        res = res.at[node].add(-fault_conductance[k] * v[node])
    for src in network.sources:
        nodes = network.nodes(src.bus)
        res = res.at[nodes].set(v[nodes] - src.waveform(t, network.omega))
    return res


def positive_sequence(x3) -> complex:
    x3 = np.asarray(x3, dtype=complex)
    return (x3[0] + A_OP * x3[1] + A_OP.conjugate() * x3[2]) / 3.0


def negative_sequence(x3) -> complex:
    x3 = np.asarray(x3, dtype=complex)
    return (x3[0] + A_OP.conjugate() * x3[1] + A_OP * x3[2]) / 3.0


def zero_sequence(x3) -> complex:
    return complex(np.sum(np.asarray(x3, dtype=complex)) / 3.0)


def balanced(phasor: complex) -> np.ndarray:
    """Positive-sequence set with phase A equal to ``phasor``."""
    return np.array([phasor, phasor * A_OP.conjugate(), phasor * A_OP])
