"""Figures written next to the CSV/JSON outputs of ``eval`` and ``report``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

VERDICT_COLORS = {"admitted": "tab:green", "rejected": "tab:red", "skipped": "tab:gray"}

plt.rcParams.update({
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def plot_accuracy_by_tolerance(table: list[dict], columns: list[str], path: str | Path) -> Path:
    """One line per program: accuracy (%) against tolerance column."""
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    xs = range(len(columns))
    for row in table:
        ax.plot(xs, [row["accuracy"][c] for c in columns], marker="o", label=row["program"])
    ax.set_xticks(list(xs))
    ax.set_xticklabels(columns)
    ax.set_xlabel("tolerance (relative error)")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    if table:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_run_scores(iterations: list[dict], baseline: float | None, path: str | Path) -> Path:
    """Candidate validation score per iteration, coloured by verdict, with the frontier best."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    for verdict, color in VERDICT_COLORS.items():
        pts = [(it["iteration"], it["validation_score"]) for it in iterations
               if it.get("verdict") == verdict and it.get("validation_score") is not None]
        if pts:
            ax.scatter(*zip(*pts), color=color, label=verdict, s=18, zorder=3)
    best = [(it["iteration"], it["best_score"]) for it in iterations if it.get("best_score") is not None]
    if baseline is not None:
        best = [(0, baseline)] + best
    if best:
        ax.step(*zip(*best), where="post", color="black", lw=1.2, label="frontier best")
    ax.set_xlabel("iteration")
    ax.set_ylabel("validation score")
    ax.set_ylim(-0.02, 1.02)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
