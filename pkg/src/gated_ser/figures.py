"""Rendered-figure counterparts of the delimited plot-data files.

Every figure here mirrors one emit_plot_data file; the report command writes
both so the numbers stay machine-readable while the PNGs are glanceable.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

MODEL_COLORS = {"gru": "#1f77b4", "lstm": "#d62728", "rnn": "#2ca02c"}

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})


def _model_color(model):
    return MODEL_COLORS.get(model, "#7f7f7f")


def _line_figure(result, attr, xlabel, log_x, path):
    fig, ax = plt.subplots()
    series = {}
    for row in result.rows:
        if math.isnan(row.val_error):
            continue
        key = (row.model, row.use_bias, row.noise)
        series.setdefault(key, []).append((getattr(row, attr), row.val_error))
    for (model, use_bias, noise), points in sorted(series.items()):
        points.sort()
        label = f"{model}, bias {'on' if use_bias else 'off'}"
        if noise != "none":
            label += f", {noise}"
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", markersize=3.5,
                linestyle="--" if use_bias else "-",
                color=_model_color(model), label=label)
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("validation error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _bar_figure(result, attr, ylabel, path):
    # several sweep rows may share a (noise, model) pair; bars show the mean
    groups = {}
    for row in result.rows:
        value = getattr(row, attr)
        if not math.isnan(value):
            groups.setdefault((row.noise, row.model), []).append(value)
    noises = sorted({noise for noise, _ in groups})
    models = sorted({model for _, model in groups})
    fig, ax = plt.subplots()
    width = 0.8 / max(len(models), 1)
    for j, model in enumerate(models):
        xs, heights = [], []
        for i, noise in enumerate(noises):
            values = groups.get((noise, model))
            if values:
                xs.append(i + (j - (len(models) - 1) / 2) * width)
                heights.append(sum(values) / len(values))
        ax.bar(xs, heights, width=width, color=_model_color(model), label=model)
    ax.set_xticks(range(len(noises)))
    ax.set_xticklabels(noises, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_figures(result, output_dir):
    """PNG analogs of the plot-data files; returns the written paths."""
    if not result.rows:
        raise ValueError("cannot render figures for an empty result")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if len({r.learning_rate for r in result.rows}) > 1:
        path = output_dir / "error_vs_learning_rate.png"
        _line_figure(result, "learning_rate", "learning rate", True, path)
        written.append(path)
    if len({r.cells for r in result.rows}) > 1:
        path = output_dir / "error_vs_cells.png"
        _line_figure(result, "cells", "hidden cells", True, path)
        written.append(path)

    path = output_dir / "error_by_noise.png"
    _bar_figure(result, "val_error", "validation error", path)
    written.append(path)

    path = output_dir / "runtime_by_noise.png"
    _bar_figure(result, "median_seconds", "median training seconds", path)
    written.append(path)
    return written
