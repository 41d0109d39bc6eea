"""PNG figures for the comparison demo: bitrate histogram and weight maps.

Figures are drawn on a bare Agg canvas so no pyplot state or display
backend is involved, and PNG metadata is stripped so reruns give the same
bytes.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["bitrate_histogram", "weight_map_grid", "upsample_blocks"]

_PNG_META = {"Software": None}


def _save(fig, path):
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata=_PNG_META)


def upsample_blocks(block_map, shape, block=8):
    """Repeat a ``(by, bx)`` map to pixels and crop to ``shape``."""
    up = np.repeat(np.repeat(np.asarray(block_map), block, axis=0), block, axis=1)
    return up[:shape[0], :shape[1]]


def bitrate_histogram(bpp_mixture, bpp_gaussian, path, bins=12):
    """Overlaid per-image bpp histograms of both arms with their means marked."""
    a = np.asarray(bpp_mixture, dtype=np.float64)
    b = np.asarray(bpp_gaussian, dtype=np.float64)
    fig = Figure(figsize=(6.0, 3.6))
    ax = fig.add_subplot(1, 1, 1)
    both = np.concatenate((a, b))
    lo, hi = (float(both.min()), float(both.max())) if both.size else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1e-3
    edges = np.linspace(lo, hi, bins + 1)
    ax.hist(b, bins=edges, alpha=0.55, color="tab:gray", label="Gaussian only")
    ax.hist(a, bins=edges, alpha=0.55, color="tab:blue", label="Gaussian + delta")
    for vals, color in ((b, "tab:gray"), (a, "tab:blue")):
        if vals.size:
            ax.axvline(vals.mean(), color=color, linestyle="--", linewidth=1.2)
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel("images")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def weight_map_grid(items, path, columns=4):
    """Image, mask and weight map for each ``(name, image, mask, weight_map)``.

    Weight maps are pixel-aligned; black is delta, white is Gaussian.
    """
    items = list(items)
    n = max(len(items), 1)
    cols = min(columns, n)
    rows = -(-n // cols)
    fig = Figure(figsize=(2.2 * cols, 2.3 * 3 * rows))
    for k, (name, image, mask, wmap) in enumerate(items):
        r, c = divmod(k, cols)
        for j, (data, label) in enumerate(((image, name), (mask, "mask"), (wmap, "w"))):
            ax = fig.add_subplot(3 * rows, cols, (3 * r + j) * cols + c + 1)
            ax.imshow(data, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
            ax.set_title(label, fontsize=8)
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)
