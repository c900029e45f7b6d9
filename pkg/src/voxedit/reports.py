"""Figure rendering for the report paths: every delimited report written by
the CLI gets a matplotlib PNG sibling."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluate import EvalReport
from .trainer import TrainReport


def save_eval_figure(report: EvalReport, path: str | Path) -> None:
    """Mean Dice vs click budget, one line per label plus the overall mean."""
    budgets = report.budgets()
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for k in report.labels():
        ax.plot(budgets, [report.mean_dice(b, k) for b in budgets], marker="o",
                label=f"label {k}", alpha=0.7)
    ax.plot(budgets, [report.mean_dice(b) for b in budgets], marker="s",
            color="black", linewidth=2, label="mean")
    ax.set_xlabel("simulated clicks")
    ax.set_ylabel("Dice")
    ax.set_ylim(0, 1)
    ax.set_xticks(budgets)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_train_figure(report: TrainReport, path: str | Path) -> None:
    """Loss curve plus the click-free/interactive split per epoch."""
    epochs = range(1, len(report.epoch_mean_loss) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, report.epoch_mean_loss, marker=".")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean loss")
    ax1.grid(True, alpha=0.3)
    ax2.bar(epochs, report.epoch_clickfree, label="click-free", color="tab:blue")
    ax2.bar(epochs, report.epoch_interactive, bottom=report.epoch_clickfree,
            label="interactive", color="tab:orange")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("iterations")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_rank_figure(ranking: list[dict], path: str | Path) -> None:
    """Horizontal bars of per-case uncertainty, most uncertain on top."""
    ids = [e["case_id"] for e in ranking]
    fig, ax = plt.subplots(figsize=(5.5, 0.6 + 0.3 * max(len(ids), 1)))
    y = range(len(ids))
    ax.barh(y, [e["combined"] for e in ranking], color="tab:red", alpha=0.5, label="combined")
    ax.barh(y, [e["epistemic"] for e in ranking], color="tab:purple", alpha=0.9,
            height=0.4, label="epistemic")
    ax.set_yticks(list(y), ids)
    ax.invert_yaxis()
    ax.set_xlabel("uncertainty")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
