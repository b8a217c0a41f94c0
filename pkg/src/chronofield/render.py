"""PNG rasters of lattice grids (matplotlib, headless)."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
import numpy as np  # noqa: E402

PARTITION_COLORS = {"green": "#2ca02c", "blue": "#1f77b4", "red": "#d62728"}


def _png(fig, dpi) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=dpi)
    plt.close(fig)
    return buf.getvalue()


def _figure(shape, pixels_per_cell, dpi, bar=True):
    rows, cols = shape
    w = max(cols * pixels_per_cell / dpi, 1.0) + (1.6 if bar else 0.4)
    h = max(rows * pixels_per_cell / dpi, 1.0) + 0.9
    return plt.figure(figsize=(w, h), dpi=dpi)


def render_heatmap(grid, palette="viridis", scale=None, pixels_per_cell=20, dpi=100,
                   title=None, label="years BP") -> tuple[bytes, dict]:
    """Colour raster of ``grid`` with a colour bar.

    ``scale`` is (vmin, vmax); by default the grid range. Returns the PNG
    bytes and the annotation values (grid min and max) printed under the map.
    """
    g = np.atleast_2d(np.asarray(grid, dtype=float))
    if g.ndim != 2 or g.size == 0:
        raise ValueError("grid must be a non-empty 2-D array")
    if not np.all(np.isfinite(g)):
        raise ValueError("grid contains non-finite values")
    lo, hi = float(g.min()), float(g.max())
    vmin, vmax = scale if scale is not None else (lo, hi)
    if vmin == vmax:
        vmin, vmax = vmin - 0.5, vmax + 0.5
    fig = _figure(g.shape, pixels_per_cell, dpi)
    ax = fig.add_axes([0.08, 0.18, 0.72, 0.72])
    im = ax.imshow(g, cmap=palette, vmin=vmin, vmax=vmax, interpolation="nearest",
                   origin="lower", aspect="equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=9)
    cax = fig.add_axes([0.84, 0.18, 0.035, 0.72])
    cb = fig.colorbar(im, cax=cax)
    cb.set_label(label, fontsize=8)
    cb.ax.tick_params(labelsize=7)
    notes = {"min": lo, "max": hi}
    fig.text(0.08, 0.04, f"min {lo:.1f}   max {hi:.1f}", fontsize=8)
    return _png(fig, dpi), notes


def render_partition(labels, pixels_per_cell=20, dpi=100, title=None) -> bytes:
    """Three-colour map of a green/blue/red cell labelling."""
    lab = np.asarray(labels, dtype=object)
    keys = list(PARTITION_COLORS)
    codes = np.vectorize(keys.index, otypes=[int])(lab)
    fig = _figure(lab.shape, pixels_per_cell, dpi, bar=False)
    ax = fig.add_axes([0.05, 0.18, 0.9, 0.72])
    ax.imshow(codes, cmap=ListedColormap(list(PARTITION_COLORS.values())), vmin=-0.5, vmax=2.5,
              interpolation="nearest", origin="lower", aspect="equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=9)
    counts = ", ".join(f"{k} {int((lab == k).sum())}" for k in keys)
    fig.text(0.05, 0.04, counts, fontsize=8)
    return _png(fig, dpi)


def render_histograms(hists: dict, dpi=100, cols=4) -> bytes:
    """Small multiples of per-pit onset histograms (name -> (edges, counts))."""
    names = list(hists)
    if not names:
        raise ValueError("no histograms to draw")
    rows = int(np.ceil(len(names) / cols))
    fig, axes = plt.subplots(rows, min(cols, len(names)), figsize=(2.2 * min(cols, len(names)),
                             1.6 * rows), dpi=dpi, squeeze=False)
    for ax, name in zip(axes.ravel(), names):
        edges, counts = hists[name]
        ax.stairs(counts, edges, fill=True, color="#d62728", alpha=0.7)
        ax.set_title(str(name), fontsize=7)
        ax.tick_params(labelsize=6)
        ax.invert_xaxis()
    for ax in axes.ravel()[len(names):]:
        ax.axis("off")
    fig.tight_layout()
    return _png(fig, dpi)
