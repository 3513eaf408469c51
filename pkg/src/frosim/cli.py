"""Command-line front end: ``frosim run | compare | bench``.

Exit status: 0 success, 2 parse/validation error, 3 divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import metrics, plotting
from .engine import DivergenceError, Scheme, TimeSeries
from .scenario import ScenarioError, bundled_path, load

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3
TABLE_STEPS_US = (125, 250, 500, 1000, 2000, 4000)

log = logging.getLogger("frosim")


def _scenario(path):
    return load(path if path else bundled_path())


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}{suffix}")


def cmd_run(args) -> int:
    sc = _scenario(args.scenario).with_overrides(args.scheme, args.step_size, args.duration)
    sim = sc.simulator(copies=args.copies)
    try:
        ts = sim.run(sc.duration)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = Path(args.output)
    ts.select(sc.signals).to_csv(out)
    print(f"wrote {len(ts)} rows to {out}")
    if not args.no_plot and {"p_meas", "q_meas"} <= set(sc.signals):
        print(f"wrote {plotting.plot_power(ts, _sibling(out, '_power.png'))}")
    return EXIT_OK


def cmd_compare(args) -> int:
    com, ref = TimeSeries.from_csv(args.trace), TimeSeries.from_csv(args.reference)
    report = metrics.ErrorReport.from_traces(com, ref, scheme=args.label or Path(args.trace).stem)
    out = Path(args.output)
    metrics.write_report_csv(out, [report])
    _, text = metrics.error_table([report])
    print(text, end="")
    print("per-phase voltage errors (%): " + ", ".join(f"{v:.6g}" for v in report.per_phase))
    if not args.no_plot:
        window = (0.44, 0.48) if ref.duration >= 0.48 else None
        path = plotting.plot_compare(com, ref, _sibling(out, "_p_meas.png"), "p_meas", window,
                                      report.scheme)
        print(f"wrote {out} and {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    sc = _scenario(args.scenario)
    schemes = args.scheme or [s.value for s in Scheme]
    steps = args.step_size or [us * 1e-6 for us in TABLE_STEPS_US]
    system = sc.system()
    results = []
    for scheme in schemes:
        for h in steps:
            r = metrics.bench(sc, scheme, h, args.repetitions, args.copies, args.duration, system)
            state = f"diverged at t = {r.diverged_at:.6g} s" if r.diverged else f"{r.median:.4f} s"
            print(f"{scheme:8s} h = {h * 1e6:7g} us  {state}", flush=True)
            results.append(r)
    csv_text, text = metrics.bench_table(results)
    out = Path(args.output)
    out.write_text(csv_text)
    print(text, end="")
    if not args.no_plot:
        print(f"wrote {out} and {plotting.plot_bench(results, _sibling(out, '.png'))}")
    return EXIT_OK


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return v


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frosim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    schemes = [s.value for s in Scheme]

    r = sub.add_parser("run", help="simulate a scenario and write a CSV trace")
    r.add_argument("scenario", nargs="?", help="scenario file (default: bundled two_bus)")
    r.add_argument("--scheme", choices=schemes)
    r.add_argument("--step-size", type=_positive_float, metavar="SECONDS")
    r.add_argument("--duration", type=_positive_float, metavar="SECONDS")
    r.add_argument("--copies", type=_positive_int, default=1)
    r.add_argument("--output", default="trace.csv")
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="error of a trace against a reference trace")
    c.add_argument("trace")
    c.add_argument("reference")
    c.add_argument("--label", help="scheme label in the report")
    c.add_argument("--output", default="errors.csv")
    c.add_argument("--no-plot", action="store_true")
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", help="median wall time per scheme and step size")
    b.add_argument("scenario", nargs="?", help="scenario file (default: bundled two_bus)")
    b.add_argument("--scheme", choices=schemes, action="append")
    b.add_argument("--step-size", type=_positive_float, action="append", metavar="SECONDS")
    b.add_argument("--duration", type=_positive_float, metavar="SECONDS")
    b.add_argument("--copies", type=_positive_int, default=1)
    b.add_argument("--repetitions", type=_positive_int, default=3)
    b.add_argument("--output", default="bench.csv")
    b.add_argument("--no-plot", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, metrics.GridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
