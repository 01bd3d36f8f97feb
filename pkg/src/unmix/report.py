"""Simulation report files: delimited summaries plus rendered figures.

Figures use the Agg backend so rendering works headless; they land next to
the CSV/JSON summaries in the chosen output directory.
"""

from __future__ import annotations

import csv
import json
import logging
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "cell", "model", "stat", "order", "pattern", "weighting", "n", "replicates",
    "failures", "convergence_rate",
    "dF_identity", "dF_identity_se", "dF_efficient", "dF_efficient_se",
    "dA_identity", "dA_identity_se", "dA_efficient", "dA_efficient_se",
]


def summary_csv_text(rows: list[dict]) -> str:
    """The campaign summary as CSV text (also what `simulate` prints)."""
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in SUMMARY_COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_summary(rows: list[dict], outdir: str) -> list[str]:
    """Write summary.csv and summary.json; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "summary.csv")
    with open(csv_path, "w") as fh:
        fh.write(summary_csv_text(rows))
    json_path = os.path.join(outdir, "summary.json")
    public = [{k: v for k, v in row.items() if not k.startswith("_")} for row in rows]
    with open(json_path, "w") as fh:
        json.dump(public, fh, indent=2)
        fh.write("\n")
    return [csv_path, json_path]


def _metric_bars(ax, rows, metric, title):
    cells = [row["cell"] for row in rows]
    ident = [row.get(f"{metric}_identity") for row in rows]
    effic = [row.get(f"{metric}_efficient") for row in rows]
    x = range(len(cells))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [v or 0.0 for v in ident], width,
           label="identity weight", color="#4878b0")
    if any(v is not None for v in effic):
        ax.bar([i + width / 2 for i in x], [v or 0.0 for v in effic], width,
               label="efficient weight", color="#d1653e")
    ax.set_xticks(list(x))
    ax.set_xticklabels(cells, rotation=30, ha="right", fontsize=8)
    ax.set_title(title)
    ax.set_ylabel(f"mean {metric}")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)


def render_figures(rows: list[dict], outdir: str) -> list[str]:
    """Render the comparison figures for a campaign; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for metric, label in (("dF", "normalized Frobenius error"),
                          ("dA", "Amari error")):
        if not any(f"{metric}_identity" in row for row in rows):
            continue
        fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(rows), 4.0))
        _metric_bars(ax, rows, metric, label)
        fig.tight_layout()
        path = os.path.join(outdir, f"{metric}_by_cell.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)

    # per-cell spread of the replicate-level errors, when retained
    spread_rows = [r for r in rows if "_samples_dF_identity" in r]
    if spread_rows:
        fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(spread_rows), 4.0))
        data, labels = [], []
        for row in spread_rows:
            data.append(row["_samples_dF_identity"])
            labels.append(row["cell"] + "\nidentity")
            if "_samples_dF_efficient" in row:
                data.append(row["_samples_dF_efficient"])
                labels.append(row["cell"] + "\nefficient")
        ax.boxplot(data, tick_labels=labels, showfliers=False)
        ax.set_ylabel("dF per replicate")
        ax.set_title("replicate spread")
        ax.tick_params(axis="x", labelsize=7)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        path = os.path.join(outdir, "dF_spread.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    log.info("wrote %d figure(s) to %s", len(paths), outdir)
    return paths
