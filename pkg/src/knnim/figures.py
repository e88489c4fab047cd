"""Static figure rendering for study reports.

Figures are written straight to files (Agg backend); they accompany the
delimited outputs of the CLI rather than opening interactive windows.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import ExposureTable
from .sim import PowerStudy

_STAT_ORDER = ("score", "knn", "elc", "htn", "pearson", "cons", "asymp")


def power_figure(study: PowerStudy, path) -> None:
    """Grouped bars of rejection rate by model for every statistic."""
    rows = study.rows()
    stats = [s for s in _STAT_ORDER if any(r["statistic"] == s for r in rows)]
    models = list(study.models)
    width = 0.8 / max(1, len(stats))
    x = np.arange(len(models))

    fig, ax = plt.subplots(figsize=(max(6.0, 1.0 + 0.8 * len(models)), 4.0))
    for pos, stat in enumerate(stats):
        rates = [
            next(
                r["rejection_rate"]
                for r in rows
                if r["model"] == m and r["statistic"] == stat
            )
            for m in models
        ]
        ax.bar(x + (pos - (len(stats) - 1) / 2) * width, rates, width, label=stat)
    ax.axhline(study.alpha, color="grey", linestyle=":", linewidth=1)
    ax.set_xticks(x)
    ax.set_xticklabels([str(m) for m in models])
    ax.set_xlabel("model")
    ax.set_ylabel(f"rejection rate at alpha={study.alpha:g}")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8, ncol=min(4, len(stats)))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pvalue_boxplot(study: PowerStudy, path) -> None:
    """Boxplots of randomization p-values per statistic, grouped by model."""
    stats = list(study.statistics)
    models = list(study.models)
    fig, axes = plt.subplots(
        len(stats), 1, figsize=(max(6.0, 1.0 + 0.7 * len(models)), 2.2 * len(stats)),
        sharex=True, squeeze=False,
    )
    for row, stat in enumerate(stats):
        ax = axes[row][0]
        data = [study.pvalues[m, stat] for m in models]
        ax.boxplot(data, tick_labels=[str(m) for m in models])
        ax.axhline(study.alpha, color="grey", linestyle=":", linewidth=1)
        ax.set_ylabel(stat)
        ax.set_ylim(-0.02, 1.02)
    axes[-1][0].set_xlabel("model")
    fig.suptitle("randomization p-values")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def exposure_figure(table: ExposureTable, path) -> None:
    """Bar chart of unit counts over the 2^(k+1) exposure cells."""
    rows = table.as_rows()
    labels = [f"w={r['own_treatment']} s={r['neighbor_status']}" for r in rows]
    counts = [r["count"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(rows)), 4.0))
    ax.bar(np.arange(len(rows)), counts)
    ax.set_xticks(np.arange(len(rows)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("units")
    ax.set_title(f"exposure counts (k={table.k}, eligible={table.n_eligible})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
