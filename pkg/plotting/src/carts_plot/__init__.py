"""Render carts experiment CSVs into paper-style figures: empirical CDFs,
grouped bar charts, and trajectory overlays."""

from carts_plot.render import PlotSpec, render, render_figure

__all__ = ["PlotSpec", "render", "render_figure"]
