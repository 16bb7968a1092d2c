"""Matplotlib figure rendering for the CLI report paths.

Every chart lands next to its delimited output. Rendering is headless
(Agg) and avoids embedded timestamps so repeated runs produce identical
bytes. These are data charts, not maps; spatial layers ship as GeoJSON.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "eventrisk"}}


def save_describe_chart(rows, path):
    """Bar chart of the coefficient of variation per event type."""
    by_kind: dict[str, list] = {}
    for r in rows:
        by_kind.setdefault(r.period_kind, []).append(r)
    kinds = list(by_kind)
    types = sorted({r.event_type for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(kinds), 1)
    for i, kind in enumerate(kinds):
        lookup = {r.event_type: r for r in by_kind[kind]}
        cv = [lookup[t].cv if t in lookup and lookup[t].cv is not None else 0.0 for t in types]
        ax.bar(np.arange(len(types)) + i * width, cv, width=width, label=kind)
    ax.set_xticks(np.arange(len(types)) + 0.4 - width / 2)
    ax.set_xticklabels(types)
    ax.set_ylabel("coefficient of variation")
    ax.set_xlabel("event type")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_correlation_heatmap(cm, path):
    """Feature-by-event-type correlation heatmap."""
    fig_h = max(3.0, 0.28 * len(cm.feature_names) + 1.5)
    fig, ax = plt.subplots(figsize=(6, fig_h))
    data = np.ma.masked_invalid(cm.rho)
    im = ax.imshow(data, cmap="RdBu_r", vmin=-1, vmax=1, aspect="auto")
    ax.set_xticks(range(len(cm.event_types)))
    ax.set_xticklabels(cm.event_types)
    ax.set_yticks(range(len(cm.feature_names)))
    ax.set_yticklabels(cm.feature_names, fontsize=7)
    fig.colorbar(im, ax=ax, label="Pearson correlation")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_importance_chart(report, path, title=""):
    """Horizontal bars of normalized importance scores, best on top."""
    names = [n for n, _ in report.ranked]
    scores = [s for _, s in report.ranked]
    fig_h = max(2.5, 0.3 * len(names) + 1.2)
    fig, ax = plt.subplots(figsize=(6, fig_h))
    pos = np.arange(len(names))[::-1]
    ax.barh(pos, scores, color=["tab:blue" if n in report.selected else "lightgray" for n in names])
    ax.axvline(report.threshold, color="tab:red", linestyle="--", linewidth=1)
    ax.set_yticks(pos)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("importance score")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_ecdf_chart(ecdf, path, title=""):
    """Step ECDF of absolute errors with a frequency histogram behind it."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.concatenate([[0.0], ecdf.thresholds])
    ys = np.concatenate([[0.0], ecdf.fractions])
    ax.step(xs, ys, where="post", color="tab:blue", label="ECDF")
    ax.set_xlabel("absolute error")
    ax.set_ylabel("cumulative fraction")
    ax.set_ylim(0, 1.05)
    ax2 = ax.twinx()
    weights = np.diff(np.concatenate([[0.0], ecdf.fractions]))
    ax2.bar(ecdf.thresholds, weights, width=max(0.02, 0.8 * np.min(np.diff(xs)) if len(xs) > 1 else 0.1),
            alpha=0.3, color="tab:gray")
    ax2.set_ylabel("fraction at error")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_breaks_chart(classification, path, title=""):
    """Histogram of region values with the class-break lines."""
    values = np.array(list(classification.values.values()), dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=min(30, max(5, len(values) // 3)), color="tab:gray", alpha=0.7)
    for b, label in zip(classification.breaks, classification.labels):
        ax.axvline(b, color="tab:red", linestyle="--", linewidth=1)
    ax.set_xlabel("predicted mean events per period")
    ax.set_ylabel("regions")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_comparison_chart(comparisons: dict, path):
    """Grouped bars of MAE/RMSE on each side of the cutoff, per event type."""
    types = sorted(comparisons)
    x = np.arange(len(types))
    fig, ax = plt.subplots(figsize=(7, 4))
    series = {
        "MAE before": [comparisons[t].before.mae_obs for t in types],
        "MAE after": [comparisons[t].after.mae_obs for t in types],
        "RMSE before": [comparisons[t].before.rmse for t in types],
        "RMSE after": [comparisons[t].after.rmse for t in types],
    }
    width = 0.2
    for i, (label, vals) in enumerate(series.items()):
        ax.bar(x + (i - 1.5) * width, vals, width=width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(types)
    ax.set_ylabel("error")
    ax.set_xlabel("event type")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
