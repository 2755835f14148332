"""Figure rendering for training logs and reports.

Every report-producing CLI path can drop a PNG next to its delimited
output; figures are decorative diagnostics, never inputs to anything.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def training_curves(log, path: str | Path) -> None:
    """NLL curves plus, for adversarial runs, reward/accuracy panels."""
    records = log.records
    adversarial = [r for r in records if r.phase == "adversarial"]
    n_panels = 2 if adversarial else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(6 * n_panels, 4))
    axes = np.atleast_1d(axes)
    ax = axes[0]
    xs = range(len(records))
    train = [r.train_nll if r.train_nll is not None else np.nan for r in records]
    dev = [r.dev_nll if r.dev_nll is not None else np.nan for r in records]
    ax.plot(xs, train, label="train NLL")
    ax.plot(xs, dev, label="dev NLL")
    for i, r in enumerate(records):
        if r.phase != "adversarial":
            continue
        ax.axvline(i, color="grey", lw=0.5, alpha=0.2)
    ax.set_xlabel("epoch (all phases)")
    ax.set_ylabel("NLL per step (nats)")
    ax.legend()
    ax.set_title("likelihood")
    if adversarial:
        ax2 = axes[1]
        xs2 = range(len(adversarial))
        ax2.plot(xs2, [r.mean_reward for r in adversarial], label="mean reward")
        ax2.plot(xs2, [r.mean_baseline for r in adversarial], label="baseline")
        ax2.plot(xs2, [r.disc_accuracy for r in adversarial], label="disc accuracy")
        ax2.set_xlabel("adversarial epoch")
        ax2.set_ylim(0, 1)
        ax2.legend()
        ax2.set_title("adversarial signals")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def policy_curve(curve, path: str | Path, window: int = 500) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ws = curve.windowed_success(window)
    ax.plot(ws, label=f"success rate (window {window})")
    ax.set_xlabel("episode")
    ax.set_ylabel("windowed success rate")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def crosseval_heatmap(report, path: str | Path, metric: str = "success_rate") -> None:
    names = report.simulators
    m = np.array(
        [[report.cell(t, e)[metric] for e in names] for t in names]
    )
    fig, ax = plt.subplots(figsize=(1.2 * len(names) + 3, 1.0 * len(names) + 2))
    im = ax.imshow(m, cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("evaluation simulator")
    ax.set_ylabel("training simulator")
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, f"{m[i, j]:.1f}", ha="center", va="center", color="white")
    fig.colorbar(im, ax=ax, label=metric)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def human_report_bars(report: dict, path: str | Path) -> None:
    rows = report["policies"]
    names = sorted(rows)
    qs = ["q3", "q4", "q5", "q6"]
    x = np.arange(len(qs))
    width = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, name in enumerate(names):
        means = [rows[name][f"{q}_mean"] for q in qs]
        sds = [rows[name][f"{q}_sd"] for q in qs]
        ax.bar(x + i * width, means, width, yerr=sds, capsize=3, label=name)
    ax.set_xticks(x + width * (len(names) - 1) / 2, [q.upper() for q in qs])
    ax.set_ylim(0, 6)
    ax.set_ylabel("mean score (1-6)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
