"""Convergence figure: worst-agent distance per tick on a log scale."""
from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# solid blue, dashed orange, then the rest of the default cycle
LINE_STYLES = [("-", "C0"), ("--", "C1"), (":", "C2"), ("-", "C3"), ("--", "C4")]
EPSILON_STYLE = dict(linestyle="-.", color="#EDB120", linewidth=1.5)


def convergence_figure(curves, epsilon: float | None = None, metric: str = "dist2") -> Figure:
    """``curves`` is a list of ``(label, trace_dict)`` as returned by :func:`asyncqp.io.read_trace`."""
    fig = Figure(figsize=(6.0, 3.6))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    for n, (label, tr) in enumerate(curves):
        ls, color = LINE_STYLES[n % len(LINE_STYLES)]
        y = np.asarray(tr[metric]).max(axis=1)
        ax.semilogy(tr["k"], np.maximum(y, np.finfo(float).tiny), linestyle=ls, color=color, label=label)
    if epsilon is not None:
        ax.axhline(epsilon, label=f"$\\epsilon$ = {epsilon:g}", **EPSILON_STYLE)
    ax.set_xlabel("timestep")
    ax.set_ylabel("distance to optimum" if metric == "dist2" else "block-max distance")
    ax.grid(True, which="major", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def save_convergence_plot(path, curves, epsilon: float | None = None, metric: str = "dist2") -> Path:
    if not curves:
        raise ValueError("nothing to plot")
    path = Path(path)
    fig = convergence_figure(curves, epsilon, metric)
    fmt = path.suffix.lstrip(".") or "svg"
    # fixed salt and no date keep SVG output byte-stable between runs
    with matplotlib.rc_context({"svg.hashsalt": "asyncqp"}):
        fig.savefig(path, format=fmt, metadata={"Date": None} if fmt in ("svg", "pdf") else None)
    return path
