"""Standalone SVG line plots of CSV series."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("svg")
matplotlib.rcParams["svg.hashsalt"] = "cqnls"  # stable element ids
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class PlotError(ValueError):
    pass


def read_columns(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise PlotError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise PlotError(f"{path} has a header but no data rows")
    cols = {}
    for i, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[i]) for r in body])
        except ValueError:
            continue  # non-numeric column
    return cols


def plot(
    series,
    x: str,
    ys: list[str],
    out,
    *,
    loglog: bool = False,
    reference_slope: float | None = None,
    title: str | None = None,
) -> Path:
    """Write a line plot of columns ``ys`` against ``x`` to an SVG file.

    With ``reference_slope`` a dashed power law through the first point of
    the first series is overlaid (meaningful on log-log axes).
    """
    cols = read_columns(series)
    for name in [x, *ys]:
        if name not in cols:
            raise PlotError(f"unknown column {name!r}; available: {', '.join(cols)}")
    fig, ax = plt.subplots(figsize=(6, 4))
    xv = cols[x]
    for name in ys:
        ax.plot(xv, cols[name], marker="o", markersize=3, label=name)
    if reference_slope is not None:
        y0 = cols[ys[0]][0]
        ax.plot(xv, y0 * (xv / xv[0]) ** reference_slope, "k--", label=f"slope {reference_slope:g}")
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out = Path(out)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
