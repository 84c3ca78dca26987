"""Figure rendering for the report-producing commands.

Figures are written next to the delimited output: benchmark runs get
relative-error-vs-SNR curves per setting, importance runs get a mean-rank
bar chart per group.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def benchmark_curves(rows, path, metric: str = "relative-iqmse") -> None:
    """Mean metric vs. SNR, one line per method, one panel per setting."""
    settings = sorted({r["setting"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(1, len(settings),
                             figsize=(4.2 * len(settings), 3.4),
                             squeeze=False)
    for ax, setting in zip(axes[0], settings):
        for method in methods:
            pts = {}
            for r in rows:
                if (r["setting"] == setting and r["method"] == method
                        and r["metric"] == metric):
                    pts.setdefault(r["snr"], []).append(r["value"])
            snrs = sorted(pts)
            means = [np.mean(pts[s]) for s in snrs]
            ax.plot(snrs, means, marker="o", label=method)
        ax.axhline(1.0, color="grey", lw=0.8, ls="--")
        ax.set_xscale("log")
        ax.set_xlabel("SNR")
        ax.set_ylabel(f"mean {metric}")
        ax.set_title(setting)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def importance_chart(report, path) -> None:
    """Per-group mean rank (higher = more important) with per-fold deltas."""
    names = report.group_names
    x = np.arange(len(names))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].bar(x, report.rank, color="tab:blue")
    axes[0].set_xticks(x, names, rotation=45, ha="right")
    axes[0].set_ylabel("rank (1 = least important)")
    axes[0].set_title(f"ranking ({report.strategy.value})")
    axes[1].bar(x, report.mean_delta, color="tab:orange")
    spread = report.per_fold_deltas.std(axis=0, ddof=1) \
        if report.per_fold_deltas.shape[0] > 1 else None
    if spread is not None:
        axes[1].errorbar(x, report.mean_delta, yerr=spread, fmt="none",
                         ecolor="black", capsize=3, lw=1)
    axes[1].set_xticks(x, names, rotation=45, ha="right")
    axes[1].set_ylabel("mean loss increase")
    axes[1].set_title("cross-fitted deltas")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
