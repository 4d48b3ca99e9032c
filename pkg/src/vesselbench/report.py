"""Report rendering: JSON + CSV + aligned text table + figures.

The experiment matrix emits one directory containing machine-readable
(report.json, report.csv) and human-readable (report.txt) forms of the
five-experiment comparison, plus matplotlib figures: per-metric boxplots
across experiments and the training curves.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import MetricReport
from .pipeline import MatrixReport

_METRIC_TITLES = {"dsc": "DSC", "mhd_mm": "MHD [mm]", "vs": "VS"}


def _fmt_agg(agg) -> str:
    if agg is None:
        return "n/a"
    return f"{agg['mean']:.3f} ± {agg['sd']:.3f}"


def render_text_table(report: MatrixReport) -> str:
    """Aligned table with one row per experiment, mean ± sd per metric."""
    headers = ["", "Input", "Augmentation", "DSC", "MHD [mm]", "VS"]
    rows = []
    for res in report.results:
        aggs = res.report.aggregates()
        rows.append(
            [
                res.spec.exp_id,
                res.spec.input_label(),
                res.spec.label(),
                _fmt_agg(aggs["dsc"]),
                _fmt_agg(aggs["mhd_mm"]),
                _fmt_agg(aggs["vs"]),
            ]
        )
    widths = [max(len(str(r[i])) for r in [headers] + rows) for i in range(len(headers))]
    lines = []
    for r in [headers] + rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def write_csv(report: MatrixReport, path) -> None:
    """Per-case rows, one line per (experiment, case)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["experiment", "input", "augmentation", "case_id", "dsc", "mhd_mm", "vs", "note"]
        )
        for res in report.results:
            for row in res.report.rows:
                writer.writerow(
                    [
                        res.spec.exp_id,
                        res.spec.input_label(),
                        res.spec.label(),
                        row.case_id,
                        f"{row.dsc:.6f}",
                        "" if row.mhd_mm is None else f"{row.mhd_mm:.6f}",
                        f"{row.vs:.6f}",
                        row.note,
                    ]
                )


def plot_metric_boxes(report: MatrixReport, path) -> None:
    """One boxplot panel per metric, experiments a-e side by side."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    ids = [res.spec.exp_id for res in report.results]
    for ax, metric in zip(axes, MetricReport.METRICS):
        data = [res.report.values(metric) for res in report.results]
        filled = [d if d else [float("nan")] for d in data]
        ax.boxplot(filled, tick_labels=ids)
        ax.set_title(_METRIC_TITLES[metric])
        ax.set_xlabel("experiment")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(report: MatrixReport, path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for res in report.results:
        epochs = [e["epoch"] for e in res.model.log]
        axes[0].plot(epochs, [e["train_loss"] for e in res.model.log],
                     label=res.spec.exp_id)
        axes[1].plot(epochs, [e["val_loss"] for e in res.model.log],
                     label=res.spec.exp_id)
    axes[0].set_title("training dice loss")
    axes[1].set_title("validation dice loss")
    for ax in axes:
        ax.set_xlabel("epoch")
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_matrix_report(report: MatrixReport, outdir, figures: bool = True) -> dict:
    """Write report.{json,csv,txt} and figures/; returns the file map."""
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "json": os.path.join(outdir, "report.json"),
        "csv": os.path.join(outdir, "report.csv"),
        "txt": os.path.join(outdir, "report.txt"),
    }
    with open(paths["json"], "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    write_csv(report, paths["csv"])
    with open(paths["txt"], "w") as f:
        f.write(render_text_table(report))
    if figures:
        figdir = os.path.join(outdir, "figures")
        os.makedirs(figdir, exist_ok=True)
        paths["fig_metrics"] = os.path.join(figdir, "metrics_boxplot.png")
        paths["fig_training"] = os.path.join(figdir, "training_curves.png")
        plot_metric_boxes(report, paths["fig_metrics"])
        plot_training_curves(report, paths["fig_training"])
    return paths


def write_single_report(report: MetricReport, out_json, figures_dir=None) -> None:
    """Evaluation report for one prediction set (no experiment matrix)."""
    with open(out_json, "w") as f:
        json.dump({"schema": "vesselbench-eval/1", **report.to_dict()}, f, indent=2,
                  sort_keys=True)
        f.write("\n")
    if figures_dir:
        os.makedirs(figures_dir, exist_ok=True)
        fig, axes = plt.subplots(1, 3, figsize=(12, 4))
        for ax, metric in zip(axes, MetricReport.METRICS):
            vals = report.values(metric)
            ax.boxplot([vals if vals else [float("nan")]], tick_labels=[metric])
            ax.set_title(_METRIC_TITLES[metric])
            ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(figures_dir, "metrics_boxplot.png"), dpi=120)
        plt.close(fig)
