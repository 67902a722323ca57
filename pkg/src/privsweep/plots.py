"""Render sweep results as SVG charts plus companion CSVs of the plotted
numbers, so nobody has to scrape values back out of the figures."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import EmptyReportError
from .harness import SweepResult

PLOT_METRICS = ("utility_loss", "privacy_leakage", "true_revealed")

_AXIS_LABEL = {
    "utility_loss": "utility loss (1 - acc_private / acc_nonprivate)",
    "privacy_leakage": "privacy leakage (tpr - fpr)",
    "true_revealed": "members correctly revealed",
}


def _series(result: SweepResult, metric: str):
    """Seed-mean and seed-stddev of one metric per (mechanism, epsilon),
    successful rows only. Returns {mechanism: (eps, mean, std, n)} with
    epsilon ascending."""
    cells: dict[str, dict[float, list[float]]] = {}
    for row in result.rows:
        if row.status != "ok":
            continue
        value = getattr(row, metric)
        cells.setdefault(row.mechanism, {}).setdefault(row.epsilon, []).append(
            float(value)
        )
    series = {}
    for mech, by_eps in cells.items():
        eps = np.array(sorted(by_eps))
        mean = np.array([np.mean(by_eps[e]) for e in eps])
        std = np.array([np.std(by_eps[e]) for e in eps])
        count = np.array([len(by_eps[e]) for e in eps])
        series[mech] = (eps, mean, std, count)
    return series


def emit_plots(result: SweepResult, out_dir: str) -> list[str]:
    """Write one SVG and one companion CSV per metric. Needs at least one
    successful row."""
    if not any(row.status == "ok" for row in result.rows):
        raise EmptyReportError("no successful rows to report")
    os.makedirs(out_dir, exist_ok=True)
    matplotlib.rcParams["svg.hashsalt"] = "privsweep"
    written = []
    for metric in PLOT_METRICS:
        series = _series(result, metric)
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for mech in sorted(series):
            eps, mean, std, _ = series[mech]
            ax.errorbar(eps, mean, yerr=std, marker="o", capsize=3, label=mech)
        ax.set_xscale("log")
        ax.set_xlabel("epsilon")
        ax.set_ylabel(_AXIS_LABEL[metric])
        ax.set_title(f"{result.meta.dataset} / {result.meta.arch}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        svg_path = os.path.join(out_dir, f"{metric}.svg")
        fig.savefig(svg_path, format="svg")
        plt.close(fig)
        written.append(svg_path)

        csv_path = os.path.join(out_dir, f"plot_{metric}.csv")
        lines = ["mechanism,epsilon,mean,stddev,n_seeds"]
        for mech in sorted(series):
            eps, mean, std, count = series[mech]
            for e, m, s, k in zip(eps, mean, std, count):
                lines.append(f"{mech},{e:.17g},{m:.17g},{s:.17g},{k}")
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(csv_path)
    return written


def summary_table(result: SweepResult) -> str:
    """Plain-text seed-mean table, one line per (mechanism, epsilon)."""
    lines = [
        f"dataset={result.meta.dataset} arch={result.meta.arch}",
        f"{'mechanism':<12} {'epsilon':>10} {'util.loss':>10} {'leakage':>10} {'revealed':>9}",
    ]
    util = _series(result, "utility_loss")
    leak = _series(result, "privacy_leakage")
    reveal = _series(result, "true_revealed")
    for mech in sorted(util):
        eps, u_mean, _, _ = util[mech]
        _, l_mean, _, _ = leak[mech]
        _, r_mean, _, _ = reveal[mech]
        for i, e in enumerate(eps):
            lines.append(
                f"{mech:<12} {e:>10g} {u_mean[i]:>10.4f} {l_mean[i]:>10.4f} {r_mean[i]:>9.1f}"
            )
    failed = sum(1 for r in result.rows if r.status != "ok")
    if failed:
        lines.append(f"({failed} failed cells omitted)")
    return "\n".join(lines)
