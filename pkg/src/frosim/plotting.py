"""Figures written next to the CSV reports (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_power(ts, path):
    """Measured P and Q of the converter over the run."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        ax.plot(ts.t, ts["p_meas"], lw=1.0, label="P")
        ax.plot(ts.t, ts["q_meas"], lw=1.0, label="Q")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("power (p.u.)")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_compare(com, ref, path, signal="p_meas", window=None, label=None):
    """Overlay of a compared trace on the reference for one signal."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        com_label = label or com.meta.get("scheme", "compared")
        for ts, name, kw in ((ref, "reference", {"lw": 1.6, "color": "0.6"}),
                             (com, com_label, {"lw": 0.9, "marker": ".", "ms": 3})):
            t, x = ts.t, ts[signal]
            if window is not None:
                m = (t >= window[0]) & (t <= window[1])
                t, x = t[m], x[m]
            ax.plot(t, x, label=f"{name} (h = {ts.h * 1e6:g} us)", **kw)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(signal)
        ax.legend(loc="best")
        return _save(fig, path)


def plot_bench(results, path):
    """Median wall time against step size, one line per scheme (log-log)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        by_scheme = {}
        for r in results:
            if not r.diverged and r.median is not None:
                by_scheme.setdefault(r.scheme, []).append((r.h * 1e6, r.median))
        for scheme, pts in by_scheme.items():
            pts.sort()
            ax.loglog(*zip(*pts), marker="o", label=scheme)
        ax.set_xlabel("step size (us)")
        ax.set_ylabel("median wall time (s)")
        ax.legend(loc="best")
        return _save(fig, path)
