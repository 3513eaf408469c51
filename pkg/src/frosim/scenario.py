"""Scenario files: TOML text with ``system``, ``events``, ``solver`` and ``outputs`` sections.

Schema (units are per unit and seconds unless noted)::

    [system]
    buses = ["1", "2"]
    monitor_bus = "1"                   # optional, defaults to the first converter bus

    [[system.branches]]
    from = "2"
    to = "1"
    r = 0.1038
    x = 0.8416                          # reactance at the base frequency

    [[system.loads]]
    bus = "1"
    p = [0.24, 0.3, 0.36]               # per-phase real power at 1 p.u. voltage
    q = [0.072, 0.09, 0.108]            # per-phase reactive power, > 0 inductive
    connection = "parallel"             # or "series"

    [[system.sources]]
    bus = "2"
    magnitude = [1.03, 1.0, 0.98]       # peak phase voltage
    angle_deg = [0.0, -121.0, 118.0]

    [[system.converters]]
    bus = "1"
    P_ref = 1.0
    Q_ref = 0.35
    L_f = 4.2441e-4                     # remaining keys: controller symbols below

    [[events]]
    time = 0.2
    action = "fault_apply"              # or "fault_clear"
    bus = "1"
    phase = "B"
    r_fault = 0.1

    [solver]
    scheme = "emt"                      # scheme1 | scheme2 | emt
    h = 5e-6
    duration = 2.0
    omega_select = 376.99111843077515   # optional
    newton_tol = 1e-8                   # optional
    max_iter = 50                       # optional

    [outputs]
    signals = ["t", "v_A", ...]         # optional subset of the trace columns

Unknown keys are rejected with the offending key and its line number.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .converter import ConverterParams
from .engine import TRACE_COLUMNS, ConverterSpec, Event, Scheme, Simulator, System
from .integrators import OMEGA_60HZ, SolverConfig
from .network import (
    PHASES, Branch, Bus, ConstantImpedanceLoad, IdealSource, Network, NetworkError,
)

# controller parameter symbols -> ConverterParams fields
PARAM_KEYS = {
    "L_f": "l_f", "P_ref": "p_ref", "Q_ref": "q_ref",
    "T_Pcon": "t_pcon", "T_Qcon": "t_qcon",
    "K_p_iod": "k_p_iod", "K_i_iod": "k_i_iod", "K_p_ioq": "k_p_ioq", "K_i_ioq": "k_i_ioq",
    "K_p_vid": "k_p_vid", "K_i_vid": "k_i_vid", "K_p_viq": "k_p_viq", "K_i_viq": "k_i_viq",
    "K_p_pll": "k_p_pll", "K_i_pll": "k_i_pll",
    "T_P": "t_p", "T_Q": "t_q", "T_V": "t_v",
}

_SECTIONS = {"system", "events", "solver", "outputs"}
_SYSTEM_KEYS = {"buses", "branches", "loads", "sources", "converters", "monitor_bus"}
_TABLE_KEYS = {
    "branches": ({"from", "to", "r", "x"}, {"name"}),
    "loads": ({"bus", "p", "q"}, {"name", "connection"}),
    "sources": ({"bus", "magnitude", "angle_deg"}, set()),
    "converters": ({"bus"}, {"name"} | set(PARAM_KEYS)),
}
_EVENT_KEYS = ({"time", "action", "bus", "phase"}, {"r_fault"})
_SOLVER_KEYS = ({"scheme", "h", "duration"}, {"omega_select", "newton_tol", "max_iter"})
_OUTPUT_KEYS = (set(), {"signals"})


class ScenarioError(ValueError):
    """Parse or validation failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key, self.line = key, line
        where = f"line {line}: " if line else ""
        what = f"[{key}] " if key else ""
        super().__init__(f"{where}{what}{message}")


@dataclass
class Scenario:
    network: Network
    converters: list[ConverterSpec]
    events: list[Event]
    scheme: Scheme
    solver: SolverConfig
    duration: float
    signals: list[str] = field(default_factory=lambda: list(TRACE_COLUMNS))
    monitor_bus: str | None = None
    source: str = "<memory>"

    def with_overrides(self, scheme=None, h=None, duration=None) -> "Scenario":
        solver = replace(self.solver, h=h) if h is not None else self.solver
        return replace(self, scheme=Scheme(scheme) if scheme else self.scheme, solver=solver,
                       duration=self.duration if duration is None else float(duration))

    def system(self) -> System:
        slots = sorted({(ev.bus, ev.phase) for ev in self.events})
        return System(self.network, self.converters, fault_slots=slots,
                      monitor_bus=self.monitor_bus)

    def simulator(self, system: System | None = None, copies: int = 1, **kw) -> Simulator:
        return Simulator(system or self.system(), self.scheme, self.solver, self.events,
                         copies=copies, **kw)


def _line_of(text: str, key: str, start: int = 0) -> int | None:
    pat = re.compile(rf'^\s*"?{re.escape(key)}"?\s*=', re.M)
    m = pat.search(text, start)
    if m is None:
        m = re.compile(rf"^\s*\[+\s*[\w.]*{re.escape(key)}\s*\]+", re.M).search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(table: dict, keys: tuple[set, set], where: str, text: str):
    required, optional = keys
    for k in table:
        if k not in required | optional:
            raise ScenarioError(f"unknown key in {where}", key=k, line=_line_of(text, k))
    for k in sorted(required - set(table)):
        raise ScenarioError(f"missing required key in {where}", key=k)


def _number(value, key, text, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError("expected a number", key=key, line=_line_of(text, key))
    if positive and not value > 0:
        raise ScenarioError("must be positive", key=key, line=_line_of(text, key))
    return float(value)


def _triple(value, key, text):
    if not (isinstance(value, list) and len(value) == 3):
        raise ScenarioError("expected three per-phase values", key=key, line=_line_of(text, key))
    return tuple(_number(v, key, text) for v in value)


def loads(text: str, source: str = "<memory>") -> Scenario:
    """Parse and validate scenario text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(f"syntax error: {exc}", line=int(m.group(1)) if m else None) from None

    for k in doc:
        if k not in _SECTIONS:
            raise ScenarioError("unknown section", key=k, line=_line_of(text, k))
    for k in ("system", "solver"):
        if k not in doc:
            raise ScenarioError("missing section", key=k)

    sysd = doc["system"]
    for k in sysd:
        if k not in _SYSTEM_KEYS:
            raise ScenarioError("unknown key in [system]", key=k, line=_line_of(text, k))
    bus_ids = [str(b) for b in sysd.get("buses", [])]
    if not bus_ids:
        raise ScenarioError("system needs a non-empty bus list", key="buses")
    if len(set(bus_ids)) != len(bus_ids):
        raise ScenarioError("duplicate bus id", key="buses", line=_line_of(text, "buses"))

    def bus_ref(value, key):
        b = str(value)
        if b not in bus_ids:
            raise ScenarioError(f"unknown bus {b!r}", key=key, line=_line_of(text, key))
        return b

    tables = {name: sysd.get(name, []) for name in _TABLE_KEYS}
    for name, rows in tables.items():
        if not isinstance(rows, list):
            raise ScenarioError("expected an array of tables", key=name, line=_line_of(text, name))
        for row in rows:
            _check_keys(row, _TABLE_KEYS[name], f"system.{name}", text)

    branches = [Branch(bus_ref(b["from"], "from"), bus_ref(b["to"], "to"),
                       _number(b["r"], "r", text), _number(b["x"], "x", text, positive=True),
                       name=str(b.get("name", f"branch{k}")))
                for k, b in enumerate(tables["branches"])]
    loads_ = []
    for k, ld in enumerate(tables["loads"]):
        conn = ld.get("connection", "parallel")
        if conn not in ("parallel", "series"):
            raise ScenarioError("connection must be 'parallel' or 'series'", key="connection",
                                line=_line_of(text, "connection"))
        loads_.append(ConstantImpedanceLoad(bus_ref(ld["bus"], "bus"), _triple(ld["p"], "p", text),
                                            _triple(ld["q"], "q", text),
                                            name=str(ld.get("name", f"load{k}")), connection=conn))
    sources = [IdealSource(bus_ref(s["bus"], "bus"), _triple(s["magnitude"], "magnitude", text),
                           _triple(s["angle_deg"], "angle_deg", text))
               for s in tables["sources"]]
    converters = []
    for k, c in enumerate(tables["converters"]):
        kw = {PARAM_KEYS[key]: _number(v, key, text) for key, v in c.items() if key in PARAM_KEYS}
        try:
            params = ConverterParams(**kw)
        except ValueError as exc:
            raise ScenarioError(str(exc), key=f"system.converters[{k}]") from None
        converters.append(ConverterSpec(bus_ref(c["bus"], "bus"), params,
                                        name=str(c.get("name", f"converter{k}" if k else "converter"))))

    events = []
    for ev in doc.get("events", []):
        _check_keys(ev, _EVENT_KEYS, "events", text)
        phase = ev["phase"]
        if isinstance(phase, str) and phase.upper() in PHASES:
            phase = PHASES.index(phase.upper())
        elif not (isinstance(phase, int) and 0 <= phase < 3):
            raise ScenarioError("phase must be A, B, C or 0..2", key="phase",
                                line=_line_of(text, "phase"))
        r_f = ev.get("r_fault")
        try:
            events.append(Event(_number(ev["time"], "time", text), str(ev["action"]),
                                bus_ref(ev["bus"], "bus"), phase,
                                None if r_f is None else _number(r_f, "r_fault", text)))
        except ValueError as exc:
            raise ScenarioError(str(exc), key="events", line=_line_of(text, "action")) from None

    sol = doc["solver"]
    _check_keys(sol, _SOLVER_KEYS, "solver", text)
    try:
        scheme = Scheme(str(sol["scheme"]).lower())
    except ValueError:
        raise ScenarioError("scheme must be scheme1, scheme2 or emt", key="scheme",
                            line=_line_of(text, "scheme")) from None
    max_iter = sol.get("max_iter", 50)
    if isinstance(max_iter, bool) or not isinstance(max_iter, int):
        raise ScenarioError("expected an integer", key="max_iter", line=_line_of(text, "max_iter"))
    h = _number(sol["h"], "h", text, positive=True)
    omega_select = _number(sol.get("omega_select", OMEGA_60HZ), "omega_select", text)
    newton_tol = _number(sol.get("newton_tol", 1e-8), "newton_tol", text)
    try:
        solver = SolverConfig(h, omega_select, newton_tol, max_iter)
    except ValueError as exc:
        raise ScenarioError(str(exc), key="solver") from None
    duration = _number(sol["duration"], "duration", text, positive=True)

    out = doc.get("outputs", {})
    _check_keys(out, _OUTPUT_KEYS, "outputs", text)
    signals = list(out.get("signals", TRACE_COLUMNS))
    for s in signals:
        if s not in TRACE_COLUMNS:
            raise ScenarioError(f"unknown signal {s!r}", key="signals", line=_line_of(text, "signals"))
    if "t" not in signals:
        signals.insert(0, "t")

    monitor = sysd.get("monitor_bus")
    if monitor is not None:
        monitor = bus_ref(monitor, "monitor_bus")
    network = Network([Bus(b) for b in bus_ids], branches, loads_, sources)
    try:
        network.validate(extra_buses=[c.bus for c in converters] + [e.bus for e in events])
    except NetworkError as exc:
        raise ScenarioError(str(exc), key="system") from None
    return Scenario(network, converters, events, scheme, solver, duration, signals, monitor, source)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return loads(text, str(path))


def bundled_path(name: str = "two_bus.scenario"):
    return resources.files("frosim") / "data" / name


def two_bus() -> Scenario:
    """The bundled two-bus test scenario."""
    return loads(bundled_path().read_text(), "two_bus.scenario")
