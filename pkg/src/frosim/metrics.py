"""Error measures against a reference trace and the wall-clock harness.

The relative error of a signal is

    err(x) = 100 * ||x_com - x_ref||_2 / ||x_ref||_2

with the norm taken over the instants both traces share, i.e. the coarse
grid.  The voltage error averages err over the three phase voltages.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .engine import DivergenceError, Scheme, TimeSeries

VOLTAGE_COLUMNS = ("v_A", "v_B", "v_C")
PHASE_COLUMN = "delta"


class GridError(ValueError):
    """The two traces have no usable common instants."""


def common_stride(h_com: float, n_com: int, h_ref: float, n_ref: int, rtol: float = 1e-9) -> int:
    """Reference samples per compared sample.

    ``n_*`` are sample counts including t = 0.  Requires h_com to be an
    integer multiple of h_ref and both traces to end at the same time.
    """
    if not (h_com > 0 and h_ref > 0):
        raise GridError("step sizes must be positive")
    ratio = h_com / h_ref
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > rtol * ratio:
        raise GridError(f"reference step {h_ref:g} does not divide compared step {h_com:g}")
    span_com, span_ref = (n_com - 1) * h_com, (n_ref - 1) * h_ref
    if abs(span_com - span_ref) > rtol * max(span_com, span_ref, h_com):
        raise GridError(f"durations differ: {span_com:g} s vs {span_ref:g} s")
    if n_com < 1:
        raise GridError("no common instants")
    return stride


def relative_error(x_com, x_ref, h_com: float | None = None, h_ref: float | None = None) -> float:
    """Percent 2-norm error of ``x_com`` relative to ``x_ref`` at common instants.

    Without step sizes both series must already be on the same grid.
    """
    x_com = np.asarray(x_com, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x_com.ndim != 1 or x_ref.ndim != 1:
        raise ValueError("relative_error expects one-dimensional series")
    if h_com is None and h_ref is None:
        if x_com.shape != x_ref.shape:
            raise GridError(f"series lengths differ: {x_com.size} vs {x_ref.size}")
        ref = x_ref
    else:
        if h_com is None or h_ref is None:
            raise ValueError("give both step sizes or neither")
        stride = common_stride(h_com, x_com.size, h_ref, x_ref.size)
        ref = x_ref[::stride]
    if ref.size == 0:
        raise GridError("no common instants")
    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise ZeroDivisionError("reference series has zero norm")
    return float(100.0 * np.linalg.norm(x_com - ref) / denom)


def _columns(ts: TimeSeries, names):
    return [ts.column(n) for n in names]


def voltage_error(com: TimeSeries, ref: TimeSeries, columns: Sequence[str] = VOLTAGE_COLUMNS):
    """Mean of the per-phase relative errors; returns (mean, per-phase list)."""
    per_phase = [relative_error(a, b, com.h, ref.h)
                 for a, b in zip(_columns(com, columns), _columns(ref, columns))]
    return float(np.mean(per_phase)), per_phase


def phase_error(com: TimeSeries, ref: TimeSeries, column: str = PHASE_COLUMN) -> float:
    return relative_error(com.column(column), ref.column(column), com.h, ref.h)


@dataclass
class ErrorReport:
    scheme: str
    h: float
    voltage_error: float | None = None
    phase_error: float | None = None
    per_phase: list[float] = field(default_factory=list)
    diverged: bool = False

    def __post_init__(self):
        if self.diverged:
            self.voltage_error = self.phase_error = None
            self.per_phase = []

    @classmethod
    def from_traces(cls, com: TimeSeries, ref: TimeSeries, scheme: str | None = None):
        v, per = voltage_error(com, ref)
        return cls(scheme or com.meta.get("scheme", "?"), com.h, v, phase_error(com, ref), per)

    def row(self) -> dict:
        fmt = (lambda v: "" if v is None else repr(v))
        out = {"scheme": self.scheme, "h": repr(self.h), "diverged": str(self.diverged).lower(),
               "voltage_error": fmt(self.voltage_error), "phase_error": fmt(self.phase_error)}
        for ph, v in zip(VOLTAGE_COLUMNS, self.per_phase or [None] * 3):
            out[f"err_{ph}"] = fmt(v)
        return out


@dataclass
class BenchResult:
    scheme: str
    h: float
    copies: int
    times: list[float] = field(default_factory=list)
    diverged: bool = False
    diverged_at: float | None = None

    @property
    def median(self) -> float | None:
        return statistics.median(self.times) if self.times else None


def bench(scenario, scheme=None, h: float | None = None, repetitions: int = 3, copies: int = 1,
          duration: float | None = None, system=None) -> BenchResult:
    """Median wall time of the step loop over ``repetitions`` runs.

    Compilation happens in a warm-up call and initial conditions are built
    before the clock starts, so only the time-stepping is measured.
    Divergence is reported in the result rather than raised.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    sc = scenario.with_overrides(scheme=scheme, h=h, duration=duration)
    sim = sc.simulator(system, copies=copies)
    res = BenchResult(sc.scheme.value, sc.solver.h, copies)
    sim.warmup()
    for _ in range(repetitions):
        plan = sim.prepare(sc.duration)
        t0 = time.perf_counter()
        try:
            sim.integrate(plan)
        except DivergenceError as exc:
            res.diverged, res.diverged_at, res.times = True, exc.time, []
            break
        res.times.append(time.perf_counter() - t0)
    return res


# -- tables ---------------------------------------------------------------------

def _grid(items, key):
    labels = list(dict.fromkeys(key(i)[1] for i in items))
    order = {s.value: k for k, s in enumerate(Scheme)}
    schemes = sorted(labels, key=lambda s: (order.get(s, len(order)), labels.index(s)))
    steps = sorted({key(i)[0] for i in items})
    cells = {key(i): i for i in items}
    return steps, schemes, cells


def _fmt(v, digits):
    return "--" if v is None else f"{v:.{digits}f}"


def error_table(reports: Iterable[ErrorReport], digits: int = 4) -> tuple[str, str]:
    """(CSV, aligned text) with step size rows and a voltage/phase column pair per scheme."""
    reports = list(reports)
    steps, schemes, cells = _grid(reports, lambda r: (r.h, r.scheme))
    header = ["step_us"] + [f"{s}_{m}" for s in schemes for m in ("voltage", "phase")]
    rows = []
    for h in steps:
        row = [f"{h * 1e6:g}"]
        for s in schemes:
            r = cells.get((h, s))
            if r is None or r.diverged:
                row += ["--", "--"]
            else:
                row += [_fmt(r.voltage_error, digits), _fmt(r.phase_error, digits)]
        rows.append(row)
    return _render(header, rows)


def bench_table(results: Iterable[BenchResult], digits: int = 3) -> tuple[str, str]:
    """(CSV, aligned text) of median seconds, step size rows by scheme columns."""
    results = list(results)
    steps, schemes, cells = _grid(results, lambda r: (r.h, r.scheme))
    header = ["step_us"] + schemes
    rows = []
    for h in steps:
        row = [f"{h * 1e6:g}"]
        for s in schemes:
            r = cells.get((h, s))
            row.append("--" if r is None or r.diverged else _fmt(r.median, digits))
        rows.append(row)
    return _render(header, rows)


def _render(header, rows) -> tuple[str, str]:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    widths = [max(len(str(r[k])) for r in [header] + rows) for k in range(len(header))]
    lines = ["  ".join(str(c).rjust(wd) for c, wd in zip(r, widths)) for r in [header] + rows]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return buf.getvalue(), "\n".join(lines) + "\n"


def write_report_csv(path, reports: Iterable[ErrorReport]):
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    rows = [r.row() for r in reports]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)



def alternating_amplitude(x, start: int, n: int = 10) -> float:
    """Magnitude of the step-alternating component of ``x[start:start+n]``.

    Least-squares fit of a quadratic trend plus A*(-1)^k over the window;
    returns |A|.  A smooth signal gives a value of order h^3 times its
    third derivative, a trapezoidal ringing gives its ringing amplitude.
    """
    x = np.asarray(x, dtype=float)
    if n < 5 or start < 0 or start + n > x.size:
        raise ValueError("window must hold at least 5 samples inside the series")
    k = np.arange(start, start + n)
    s = (k - start) / n
    basis = np.column_stack([np.ones(n), s, s * s, (-1.0) ** k])
    coef, *_ = np.linalg.lstsq(basis, x[k], rcond=None)
    return float(abs(coef[3]))
