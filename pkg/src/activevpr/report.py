"""Figure rendering for evaluation tables and training logs.

Figures are written next to the delimited outputs so every eval or
training run leaves both machine-readable and human-readable artifacts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluate import ResultTable
from .rl import EpisodeLogRow


def render_mrr_figure(table: ResultTable, path) -> Path:
    """Grouped bar chart: MRR per planner for each domain, with CI whiskers."""
    path = Path(path)
    n_p, n_d = len(table.planners), len(table.domains)
    width = 0.8 / n_p
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * n_d, 4))
    x = np.arange(n_d)
    for i, planner in enumerate(table.planners):
        cells = [table.cell(planner, d) for d in table.domains]
        vals = [c.mrr for c in cells]
        err = np.array(
            [[c.mrr - c.ci_lo for c in cells], [c.ci_hi - c.mrr for c in cells]]
        )
        ax.bar(x + (i - (n_p - 1) / 2) * width, vals, width,
               yerr=err, capsize=2, label=planner)
    ax.set_xticks(x)
    ax.set_xticklabels(table.domains, rotation=20, ha="right")
    ax.set_ylabel("MRR")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.set_title("Mean reciprocal rank by planner and domain")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_training_figure(log_rows: list[EpisodeLogRow], path) -> Path:
    """Training curves: rolling MRR window and loss over episodes."""
    path = Path(path)
    episodes = [r.episode for r in log_rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.plot(episodes, [r.mrr_window for r in log_rows], lw=0.8)
    ax1.set_ylabel("MRR (100-episode window)")
    ax1.set_ylim(0, 1)
    losses = [r.loss for r in log_rows]
    ax2.plot(episodes, losses, lw=0.5, alpha=0.7)
    ax2.set_ylabel("TD loss")
    ax2.set_xlabel("episode")
    if any(np.isfinite(l) and l > 0 for l in losses):
        ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_episode_figure(record: dict, path) -> Path:
    """Per-step belief heatmap for one exported episode trace."""
    path = Path(path)
    beliefs = np.array(record["beliefs"])
    fig, ax = plt.subplots(figsize=(8, 3))
    im = ax.imshow(beliefs, aspect="auto", interpolation="nearest", cmap="viridis")
    ax.set_xlabel("viewpoint cell")
    ax.set_ylabel("step")
    ax.set_title(
        f"episode {record.get('episode', '?')}: start={record['start']} "
        f"actions={record['actions']} rank={record['rank']}"
    )
    fig.colorbar(im, ax=ax, label="belief")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
