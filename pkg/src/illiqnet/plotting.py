"""Deterministic SVG line charts for the report stage."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "svg.hashsalt": "illiqnet",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _ticks(ax, dates, max_labels: int = 12):
    step = max(1, int(np.ceil(len(dates) / max_labels)))
    idx = np.arange(0, len(dates), step)
    ax.set_xticks(idx)
    ax.set_xticklabels([dates[i] for i in idx], rotation=45, ha="right")


def _crash_bands(ax, crash_flags):
    for i, c in enumerate(crash_flags):
        if c:
            ax.axvspan(i - 0.5, i + 0.5, color="tab:red", alpha=0.12, lw=0)


def daily_illiquidity(path, dates, values, crash_flags) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        _crash_bands(ax, crash_flags)
        ax.plot(np.arange(len(dates)), values, color="tab:blue", lw=1.2)
        ax.set_ylabel("market illiquidity")
        _ticks(ax, dates)
        _save(fig, path)


def nmi_scatter(path, means, stds, crash_flags) -> None:
    means, stds = np.asarray(means), np.asarray(stds)
    crash = np.asarray(crash_flags, dtype=bool)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4))
        ax.scatter(means[~crash], stds[~crash], s=14, color="tab:blue", label="other days")
        ax.scatter(means[crash], stds[crash], s=18, color="tab:red", marker="^", label="crash days")
        ax.set_xlabel("mean NMI")
        ax.set_ylabel("std NMI")
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def gcc_timeline(path, dates, ratios, thresholds, crash_flags) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        _crash_bands(ax, crash_flags)
        x = np.arange(len(dates))
        ax.plot(x, ratios, color="tab:green", lw=1.2, label="GCC ratio")
        ax.set_ylabel("GCC ratio")
        ax.set_ylim(0, 1.05)
        ax2 = ax.twinx()
        ax2.plot(x, thresholds, color="tab:gray", lw=1.0, ls="--", label="threshold")
        ax2.set_ylabel("threshold")
        ax2.grid(False)
        _ticks(ax, dates)
        _save(fig, path)


def signal_timeline(path, dates, w_d, warn, crash_flags) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        _crash_bands(ax, crash_flags)
        x = np.arange(len(dates))
        ax.plot(x, w_d, color="tab:purple", lw=1.2, label="w_d")
        hits = [i for i, w in enumerate(warn) if w]
        if hits:
            ax.scatter(hits, [0] * len(hits), marker="v", color="black", s=20, label="warning", zorder=3)
        ax.set_ylabel("daily non-randomness")
        ax.set_ylim(-0.08, 1.05)
        ax.legend(loc="upper left", frameon=False)
        _ticks(ax, dates)
        _save(fig, path)
