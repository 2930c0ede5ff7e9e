"""SVG figures: SROC curves with summary points and confidence regions,
and coverage plots for simulation summaries.

Figures are drawn on a bare ``Figure`` with the SVG canvas, so no pyplot
state is touched; a fixed hash salt and a blank date make output
byte-reproducible.
"""

from dataclasses import dataclass

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

__all__ = ["SrocLayer", "plot_sroc", "plot_coverage", "save_svg"]

_COLORS = ("#1f4e79", "#b03a2e", "#1e8449", "#7d3c98")
_STYLE = {
    "svg.hashsalt": "diagmeta",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


@dataclass(frozen=True)
class SrocLayer:
    """One fit's curve, summary point and region, all in (fpr, sens)."""

    label: str
    curve: np.ndarray
    summary: tuple
    region: np.ndarray


def save_svg(fig, path, description=""):
    with matplotlib.rc_context(_STYLE):
        FigureCanvasSVG(fig)
        fig.savefig(path, format="svg", metadata={"Date": None, "Description": description})


def plot_sroc(layers, path, level=0.95, description=""):
    """Write an SROC figure with one curve, point and region per layer."""
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(5.0, 5.0))
        ax = fig.add_subplot(1, 1, 1)
        for i, layer in enumerate(layers):
            color = _COLORS[i % len(_COLORS)]
            ax.plot(layer.curve[:, 0], layer.curve[:, 1], color=color, lw=1.5, label=layer.label)
            ax.plot(layer.region[:, 0], layer.region[:, 1], color=color, lw=1.0, ls="--")
            ax.plot([layer.summary[0]], [layer.summary[1]], marker="o", color=color, ms=5, ls="none")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.set_aspect("equal")
        ax.set_xlabel("1 - specificity")
        ax.set_ylabel("sensitivity")
        ax.set_title(f"SROC with {round(100 * level)}% confidence regions")
        ax.legend(loc="lower right", frameon=False)
        save_svg(fig, path, description)


def plot_coverage(summaries, path, level=0.95, description=""):
    """Coverage of the eta_bar and xi_bar intervals, one marker per scenario and method."""
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(7.0, 3.5))
        axes = [fig.add_subplot(1, 2, k + 1) for k in range(2)]
        methods = sorted({s.method.value for s in summaries})
        scenarios = []
        for s in summaries:
            key = (s.scenario.link.value, s.scenario.n, s.scenario.prevalence, s.scenario.rho,
                   s.scenario.se_true)
            if key not in scenarios:
                scenarios.append(key)
        for ax, name in zip(axes, ("eta_bar", "xi_bar")):
            for j, method in enumerate(methods):
                xs, ys = [], []
                for s in summaries:
                    if s.method.value != method:
                        continue
                    key = (s.scenario.link.value, s.scenario.n, s.scenario.prevalence,
                           s.scenario.rho, s.scenario.se_true)
                    xs.append(scenarios.index(key))
                    ys.append(s.coverage[name])
                ax.plot(xs, ys, marker="os"[j % 2], ls="none", color=_COLORS[j % len(_COLORS)],
                        label=method, ms=4)
            ax.axhline(level, color="0.4", ls="--", lw=0.8)
            ax.set_ylim(0.0, 1.02)
            ax.set_xlabel("scenario")
            ax.set_ylabel("empirical coverage")
            ax.set_title(name)
        axes[0].legend(loc="lower left", frameon=False)
        fig.tight_layout()
        save_svg(fig, path, description)
