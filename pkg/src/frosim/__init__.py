"""Fixed-step transient simulation of unbalanced networks with grid-feeding converters.

Utility-frequency states use frequency-response-optimized two-derivative
integrators, slow states use Obreshkov-type ones, and everything is solved
simultaneously by Newton iteration at every step.
"""

from .engine import (
    DivergenceError, Event, ConverterSpec, Scheme, Simulator, System, TimeSeries,
    TRACE_COLUMNS,
)
from .integrators import IntegratorKind, SolverConfig, coefficients
from .metrics import ErrorReport, bench, phase_error, relative_error, voltage_error
from .scenario import Scenario, ScenarioError, load, loads, two_bus

__version__ = "0.1.0"

__all__ = [
    "ConverterSpec", "DivergenceError", "ErrorReport", "Event", "IntegratorKind", "Scenario",
    "ScenarioError", "Scheme", "Simulator", "SolverConfig", "System", "TRACE_COLUMNS",
    "TimeSeries", "bench", "coefficients", "load", "loads", "phase_error", "relative_error",
    "two_bus", "voltage_error",
]
