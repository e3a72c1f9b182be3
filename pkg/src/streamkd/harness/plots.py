"""Plot emission for run records and sweep tables (matplotlib, file output)."""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first
import numpy as np  # noqa: E402


def emit_plots(record, out_dir: str | Path) -> list[Path]:
    """Confusion heatmap and drift curve for one run; missing data is skipped."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(record.confusion, cmap="viridis")
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    path = out / "confusion.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if record.drift.steps:
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        ax.plot(record.drift.steps, record.drift.d, marker="o", ms=3)
        ax.set_xlabel("step")
        ax.set_ylabel("feature drift")
        fig.tight_layout()
        path = out / "drift.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    else:
        warnings.warn("no drift series recorded; drift plot skipped")
    return written


def sweep_grid_plot(rows: list[dict], out_path: str | Path,
                    x_key: str = "lambda_override", y_key: str = "alpha",
                    metric: str = "faa_mean") -> Path | None:
    """Accuracy heatmap over a two-knob sweep (e.g. the alpha x lambda grid)."""
    usable = [r for r in rows if r.get(metric) is not None
              and r.get(x_key) is not None and r.get(y_key) is not None]
    if not usable:
        warnings.warn(f"no rows with {x_key}/{y_key}/{metric}; grid plot skipped")
        return None
    xs = sorted({r[x_key] for r in usable})
    ys = sorted({r[y_key] for r in usable})
    grid = np.full((len(ys), len(xs)), np.nan)
    for r in usable:
        grid[ys.index(r[y_key]), xs.index(r[x_key])] = r[metric]
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    im = ax.imshow(grid, cmap="viridis", aspect="auto", origin="lower")
    ax.set_xticks(range(len(xs)), [f"{v:g}" for v in xs])
    ax.set_yticks(range(len(ys)), [f"{v:g}" for v in ys])
    ax.set_xlabel(x_key)
    ax.set_ylabel(y_key)
    fig.colorbar(im, ax=ax, label=metric)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
