"""Delimited report output with matplotlib figures rendered alongside.

Every evaluation/training report path writes a CSV and, next to it, a PNG
figure with the same stem.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _fig_path(csv_path):
    stem, _ = os.path.splitext(csv_path)
    return stem + ".png"


def write_loss_log(path, log):
    """Per-step loss CSV + loss-curve figure."""
    from .losses import LossBreakdown

    rows = [bd.csv_row(step) for step, bd in log]
    write_csv(path, LossBreakdown.CSV_FIELDS, rows)
    if not rows:
        return path, None
    steps = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col, name in ((1, "L_D"), (2, "L_DMR"), (3, "L_ME"), (4, "L_MAC"),
                      (5, "total"), (6, "L_G")):
        ax.plot(steps, [r[col] for r in rows], label=name, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.legend(ncol=3, fontsize=8)
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(_fig_path(path), dpi=120)
    plt.close(fig)
    return path, _fig_path(path)


def write_retrieval_report(path, report, per_query_path=None):
    """Summary CSV, optional per-query AP dump, and an AP histogram."""
    write_csv(path, ("metric", "value"), report.rows())
    if per_query_path:
        write_csv(per_query_path, ("query_index", "average_precision"),
                  list(enumerate(report.per_query_ap)))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(report.per_query_ap, bins=20, range=(0.0, 1.0), color="#336699")
    ax.axvline(report.map_at_k, color="crimson",
               label=f"mAP@{report.k} = {report.map_at_k:.4f}")
    ax.set_xlabel("per-query average precision")
    ax.set_ylabel("queries")
    ax.legend()
    ax.set_title(f"retrieval, {report.code_bits}-bit codes")
    fig.tight_layout()
    fig.savefig(_fig_path(path), dpi=120)
    plt.close(fig)
    return path, _fig_path(path)


def write_matching_report(path, report):
    """Summary CSV, ROC sample points CSV, and an ROC figure."""
    write_csv(path, ("metric", "value"), report.rows())
    stem, _ = os.path.splitext(path)
    roc_path = stem + "_roc.csv"
    write_csv(roc_path, ("threshold", "fpr", "tpr"), report.roc_points)
    fig, ax = plt.subplots(figsize=(5, 5))
    fprs = [p[1] for p in report.roc_points]
    tprs = [p[2] for p in report.roc_points]
    ax.plot(fprs, tprs, color="#336699")
    ax.axhline(report.tpr_target, color="gray", linestyle=":")
    ax.plot([report.fpr_at_95], [min(1.0, report.tpr_target)], "o", color="crimson",
            label=f"FPR@{report.tpr_target:.0%} = {report.fpr_at_95:.4f}")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("matching ROC (Hamming threshold sweep)")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(_fig_path(path), dpi=120)
    plt.close(fig)
    return path, _fig_path(path)


def write_ablation_report(path, results):
    """Grid CSV plus a bar chart of FPR@95 per lambda setting."""
    rows = [(r["lambda_dmr"], r["lambda_bre"], r["report"].fpr_at_95,
             r["report"].threshold) for r in results]
    write_csv(path, ("lambda_dmr", "lambda_bre", "fpr_at_tpr", "threshold"), rows)
    labels = [f"DMR={r[0]:g}\nBRE={r[1]:g}" for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, [r[2] for r in rows], color="#336699")
    ax.set_ylabel("FPR at target TPR")
    ax.set_title("regularizer ablation")
    fig.tight_layout()
    fig.savefig(_fig_path(path), dpi=120)
    plt.close(fig)
    return path, _fig_path(path)
