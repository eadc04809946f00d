"""Figures for the CLI report path (Agg backend, PNG output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import ReflectorPair  # noqa: E402
from .reflector import GridSpec, export_sampling, trace_support  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "svg.hashsalt": "twomirror",
}

# PNG metadata would otherwise carry the matplotlib version string
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_mirrors(pair: ReflectorPair, path, title: str = "") -> Path:
    """Both mirror height profiles (1D) or height maps (2D)."""
    n = pair.source_points.shape[1]
    (g1, z), (g2, w) = export_sampling(pair)
    with plt.rc_context(STYLE):
        if n == 1:
            fig, ax = plt.subplots()
            ax.plot(g1.axes()[0], z, label="first mirror z(x)")
            ax.plot(g2.axes()[0], w, label="second mirror w(p)")
            ax.set_xlabel("aperture coordinate")
            ax.set_ylabel("height")
            ax.legend()
        else:
            fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.6))
            for ax, g, v, lab in ((axes[0], g1, z, "z(x)"), (axes[1], g2, w, "w(p)")):
                ext = _extent(g)
                im = ax.imshow(np.asarray(v).T, origin="lower", extent=ext, aspect="equal")
                ax.set_title(lab)
                fig.colorbar(im, ax=ax, shrink=0.8)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, Path(path))


def _extent(g: GridSpec):
    (x0, y0), (hx, hy), (nx, ny) = g.origin, g.spacing, g.shape
    return (x0 - hx / 2, x0 + hx * (nx - 0.5), y0 - hy / 2, y0 + hy * (ny - 0.5))


def plot_ray_map(pair: ReflectorPair, path, max_rays: int = 400) -> Path:
    """Source points joined to their targets (2D) or the map graph (1D)."""
    tr = trace_support(pair)
    xs = pair.source_points
    ps = pair.target_points[tr.target_index]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if xs.shape[1] == 1:
            ax.plot(xs[:, 0], ps[:, 0], ".", ms=3)
            ax.set_xlabel("x")
            ax.set_ylabel("P(x)")
        else:
            step = max(1, len(xs) // max_rays)
            sel = slice(None, None, step)
            ax.scatter(xs[sel, 0], xs[sel, 1], s=4, label="source")
            ax.scatter(ps[sel, 0], ps[sel, 1], s=4, label="target")
            ax.quiver(xs[sel, 0], xs[sel, 1], ps[sel, 0] - xs[sel, 0], ps[sel, 1] - xs[sel, 1],
                      angles="xy", scale_units="xy", scale=1.0, width=0.002, alpha=0.5)
            ax.set_aspect("equal")
            ax.legend()
        ax.set_title(f"ray map, type {pair.kind.value}")
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_residuals(per_point: dict, path) -> Path:
    """Histogram of per-point residuals, one series per label."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, vals in per_point.items():
            vals = np.asarray(vals, dtype=np.float64)
            vals = np.maximum(vals, 1e-17)
            ax.hist(np.log10(vals), bins=30, alpha=0.6, label=label)
        ax.set_xlabel("log10 residual")
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        return _save(fig, Path(path))


def plot_convergence(series: dict, path) -> Path:
    """Residual against refinement level, one line per label."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, vals in series.items():
            if vals:
                ax.semilogy(np.arange(len(vals)), vals, "o-", label=label)
        ax.set_xlabel("refinement level")
        ax.set_ylabel("residual")
        ax.legend()
        fig.tight_layout()
        return _save(fig, Path(path))
