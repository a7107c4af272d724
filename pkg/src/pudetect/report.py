"""Rendering of benchmark results: aligned text tables, delimited files
that round-trip losslessly, and figures saved next to them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import EvaluationReport

__all__ = [
    "write_reports_tsv", "read_reports_tsv", "write_aggregate_tsv",
    "render_table", "render_grid_figures", "render_score_histogram",
]

AGGREGATE_COLUMNS = ("topper", "mixing", "method", "auc_mean", "auc_std",
                     "precision_mean", "precision_std", "n_runs", "n_failed")


def write_reports_tsv(reports, path) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(EvaluationReport.COLUMNS) + "\n")
        for rep in reports:
            fh.write("\t".join(rep.to_row()) + "\n")


def read_reports_tsv(path) -> list:
    reports = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != EvaluationReport.COLUMNS:
            raise ValueError("unrecognized results file header")
        for line in fh:
            line = line.rstrip("\n")
            if line:
                reports.append(EvaluationReport.from_row(line.split("\t")))
    return reports


def write_aggregate_tsv(aggregates, path) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(AGGREGATE_COLUMNS) + "\n")
        for (t, m, method) in sorted(aggregates):
            agg = aggregates[(t, m, method)]
            fh.write("\t".join([
                repr(float(t)), repr(float(m)), method,
                repr(agg.auc_mean), repr(agg.auc_std),
                repr(agg.precision_mean), repr(agg.precision_std),
                str(agg.n_runs), str(agg.n_failed),
            ]) + "\n")


def _mark(values):
    """Best gets **, second-best gets *, within one metric column."""
    finite = [(v, i) for i, v in enumerate(values) if np.isfinite(v)]
    ranked = sorted(finite, key=lambda p: -p[0])
    marks = [""] * len(values)
    if len(ranked) >= 1:
        marks[ranked[0][1]] = "**"
    if len(ranked) >= 2:
        marks[ranked[1][1]] = "*"
    return marks


def render_table(aggregates, toppers, mixings, methods) -> str:
    """Aligned text table: one block per mixing level, methods as rows,
    (topper x metric) as columns. Best value per column in a block is
    marked ** and the runner-up *."""
    col_heads = []
    for t in toppers:
        col_heads += [f"t={t} AUC", f"t={t} Pr@R99"]
    name_w = max([len("method")] + [len(m) for m in methods])
    cell_w = max(16, max(len(h) for h in col_heads) + 2)

    lines = []
    header = "method".ljust(name_w) + "".join(h.rjust(cell_w) for h in col_heads)
    for m in mixings:
        lines.append(f"mixing = {m:g}%")
        lines.append(header)
        lines.append("-" * len(header))
        cols = {}
        for j, t in enumerate(toppers):
            auc_col = [aggregates.get((t, m, meth),
                                      None) for meth in methods]
            cols[(j, "auc")] = [a.auc_mean if a else float("nan") for a in auc_col]
            cols[(j, "prec")] = [a.precision_mean if a else float("nan")
                                 for a in auc_col]
            cols[(j, "auc_std")] = [a.auc_std if a else float("nan") for a in auc_col]
            cols[(j, "prec_std")] = [a.precision_std if a else float("nan")
                                     for a in auc_col]
        marks = {}
        for j in range(len(toppers)):
            marks[(j, "auc")] = _mark(cols[(j, "auc")])
            marks[(j, "prec")] = _mark(cols[(j, "prec")])
        for i, meth in enumerate(methods):
            row = meth.ljust(name_w)
            for j in range(len(toppers)):
                for metric in ("auc", "prec"):
                    v = cols[(j, metric)][i]
                    sd = cols[(j, f"{metric}_std")][i]
                    if np.isfinite(v):
                        cell = f"{v:.3f} ±{sd:.3f}{marks[(j, metric)][i]}"
                    else:
                        cell = "failed"
                    row += cell.rjust(cell_w)
            lines.append(row)
        lines.append("")
    lines.append("** best per column within a mixing block, * second best")
    return "\n".join(lines)


def render_grid_figures(aggregates, toppers, mixings, methods, out_dir) -> list:
    """One figure per (topper, metric): mean vs mixing with stddev bars,
    one line per method. Returns the written file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    metric_label = {"auc": "Test AUC", "prec": "Precision @ Recall 0.99"}
    for t in toppers:
        for metric in ("auc", "prec"):
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for meth in methods:
                means, stds = [], []
                for m in mixings:
                    agg = aggregates.get((t, m, meth))
                    if agg is None:
                        means.append(float("nan"))
                        stds.append(0.0)
                    elif metric == "auc":
                        means.append(agg.auc_mean)
                        stds.append(agg.auc_std)
                    else:
                        means.append(agg.precision_mean)
                        stds.append(agg.precision_std)
                ax.errorbar(list(mixings), means, yerr=stds, marker="o",
                            capsize=3, label=meth)
            ax.set_xlabel("mixing %  (0 = fully biased labels, 100 = random)")
            ax.set_ylabel(metric_label[metric])
            ax.set_title(f"topper quantile t = {t:g}")
            ax.grid(True, alpha=0.3)
            ax.legend()
            fig.tight_layout()
            path = out_dir / f"{metric}_t{str(t).replace('.', '_')}.png"
            fig.savefig(path, dpi=150)
            plt.close(fig)
            written.append(path)
    return written


def render_score_histogram(scores, s, eval_negative, threshold, path) -> None:
    """Score distribution split by session tag, with the decision line."""
    scores = np.asarray(scores, dtype=np.float64)
    s = np.asarray(s)
    neg = np.asarray(eval_negative)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    bins = np.linspace(0.0, 1.0, 41)
    groups = (
        ("known positive", (s == 1)),
        ("eval negative", (s != 1) & (neg == 1)),
        ("unlabeled", (s != 1) & (neg != 1)),
    )
    for label, mask in groups:
        if mask.any():
            ax.hist(scores[mask], bins=bins, alpha=0.55, label=label)
    ax.axvline(threshold, color="k", linestyle="--", linewidth=1,
               label=f"threshold {threshold:.3f}")
    ax.set_xlabel("model score p(human)")
    ax.set_ylabel("sessions")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
