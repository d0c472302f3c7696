"""Figure rendering. Output files are byte-stable for fixed inputs: the Agg
backend is forced, PNG metadata is pinned, and SVG hashing is salted with a
constant."""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from carts_plot.io import SchemaError, read_bars, read_metric_column, read_trajectory

plt.rcParams["svg.hashsalt"] = "carts-plot"

KINDS = ("cdf", "grouped_bar", "trajectory")


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    input_path: str
    output_path: str
    column: str = "nmse"  # cdf only
    round_index: int | None = None  # trajectory only
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")


def _render_cdf(spec, ax):
    values = read_metric_column(spec.input_path, spec.column)
    xs = np.sort(values)
    ps = np.arange(1, len(xs) + 1) / len(xs)
    ax.step(xs, ps, where="post")
    ax.set_xlabel(spec.xlabel or spec.column)
    ax.set_ylabel(spec.ylabel or "CDF")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)


def _render_grouped_bar(spec, ax):
    bars = read_bars(spec.input_path)
    groups = list(bars)
    series = sorted({s for g in bars.values() for s in g})
    width = 0.8 / len(series)
    x = np.arange(len(groups))
    for i, s in enumerate(series):
        vals = [bars[g].get(s, 0.0) for g in groups]
        ax.bar(x + i * width, vals, width, label=s)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(groups)
    ax.set_ylabel(spec.ylabel or "value")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)


def _render_trajectory(spec, ax):
    est, true = read_trajectory(spec.input_path, spec.round_index)
    ex, ey = zip(*est)
    tx, ty = zip(*true)
    ax.plot(tx, ty, "-", color="0.4", label="ground truth")
    ax.plot(ex, ey, "--", label="estimate")
    ax.scatter([0.0], [0.0], marker="^", s=90, color="tab:red", zorder=5,
               label="gNB")
    ax.set_xlabel(spec.xlabel or "x (m)")
    ax.set_ylabel(spec.ylabel or "y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    ax.grid(True, alpha=0.3)


_RENDERERS = {
    "cdf": _render_cdf,
    "grouped_bar": _render_grouped_bar,
    "trajectory": _render_trajectory,
}


def render_figure(spec: PlotSpec):
    """Build the figure without saving; the caller owns closing it."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=120)
    try:
        _RENDERERS[spec.kind](spec, ax)
    except SchemaError:
        plt.close(fig)
        raise
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    return fig


def render(spec: PlotSpec) -> str:
    """Render to the output path and return it."""
    fig = render_figure(spec)
    try:
        if spec.output_path.endswith(".svg"):
            fig.savefig(spec.output_path, metadata={"Date": None})
        else:
            fig.savefig(spec.output_path, metadata={"Software": "carts-plot"})
    finally:
        plt.close(fig)
    return spec.output_path
