"""Figure rendering for the CLI report paths.

Plots are optional companions to the delimited output: every figure is
rendered from exactly the rows that land in the CSV, never from live state.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_score_curve(rows: list[tuple[int, float]], path: str | Path) -> None:
    """Consistency score vs sliding position."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    if rows:
        xs, ys = zip(*rows)
        ax.plot(xs, ys, marker=".", lw=1)
        lo = min(range(len(ys)), key=ys.__getitem__)
        ax.axvline(xs[lo], color="tab:red", ls="--", lw=0.8,
                   label=f"min at {xs[lo]}")
        ax.legend(loc="lower left")
    ax.set_xlabel("position")
    ax.set_ylabel("consistency score")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_correlation(rows: list[tuple[int, int, float]], path: str | Path) -> None:
    """Per-level Pearson r distribution across trials (box per level)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    levels = sorted({lv for lv, _, _ in rows})
    data = [[r for lv, _, r in rows if lv == level] for level in levels]
    if levels:
        ax.boxplot(data, tick_labels=[str(lv) for lv in levels])
    ax.set_xlabel("noise level")
    ax.set_ylabel("Pearson r vs clean curve")
    ax.axhline(0.0, color="gray", lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_queue_levels(levels_per_event: list[list[int]], path: str | Path) -> None:
    """Heat strip of queue levels over time (diagnostic view of a run)."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    if levels_per_event:
        width = max(len(lv) for lv in levels_per_event)
        grid = [lv + [float("nan")] * (width - len(lv)) for lv in levels_per_event]
        im = ax.imshow(grid, aspect="auto", interpolation="nearest")
        fig.colorbar(im, ax=ax, label="level")
    ax.set_xlabel("queue position")
    ax.set_ylabel("event")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
