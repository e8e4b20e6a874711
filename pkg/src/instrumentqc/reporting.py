"""Report rendering: delimited outputs with matplotlib figures alongside.

Every report writer emits machine-readable CSV (plus JSON where the
payload is nested) and a PNG figure into the same directory, so a run
leaves both the numbers and something a reviewer can eyeball.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import ConfusionMatrix, LatencyStats, MetricsReport
from .model import TrainingLog
from .stats import TestResult

__all__ = [
    "write_metrics_report",
    "write_training_report",
    "write_latency_report",
    "write_chi_square_report",
    "write_anova_report",
]


def _ensure_dir(out_dir: str | Path) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_metrics_report(
    report: MetricsReport,
    out_dir: str | Path,
    cm: Optional[ConfusionMatrix] = None,
    title: str = "classification",
) -> Path:
    """metrics.json + metrics.csv (+ confusion_matrix.png when a matrix is given)."""
    out = _ensure_dir(out_dir)
    (out / "metrics.json").write_text(report.to_json(), encoding="utf-8")

    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "precision", "recall", "f1"])
        for label, scores in report.per_label.items():
            writer.writerow([label, f"{scores.precision:.6f}", f"{scores.recall:.6f}", f"{scores.f1:.6f}"])
        writer.writerow([])
        writer.writerow(["accuracy", f"{report.accuracy:.6f}"])
        writer.writerow(["macro_precision", f"{report.macro_precision:.6f}"])
        writer.writerow(["macro_recall", f"{report.macro_recall:.6f}"])
        writer.writerow(["macro_f1", f"{report.macro_f1:.6f}"])
        if report.roc_auc is not None:
            writer.writerow(["roc_auc", f"{report.roc_auc:.6f}"])
        if report.map50 is not None:
            writer.writerow(["map50", f"{report.map50:.6f}"])
        if report.map50_95 is not None:
            writer.writerow(["map50_95", f"{report.map50_95:.6f}"])

    if cm is not None:
        fig, ax = plt.subplots(figsize=(1.2 + 0.5 * len(cm.labels), 1.0 + 0.5 * len(cm.labels)))
        image = ax.imshow(cm.counts, cmap="Blues")
        ax.set_xticks(range(len(cm.labels)), cm.labels, rotation=45, ha="right", fontsize=8)
        ax.set_yticks(range(len(cm.labels)), cm.labels, fontsize=8)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(f"{title} confusion matrix")
        for i in range(len(cm.labels)):
            for j in range(len(cm.labels)):
                ax.text(j, i, int(cm.counts[i, j]), ha="center", va="center", fontsize=7)
        fig.colorbar(image, ax=ax, shrink=0.8)
        fig.tight_layout()
        fig.savefig(out / "confusion_matrix.png", dpi=130)
        plt.close(fig)
    return out


def write_training_report(log: TrainingLog, out_dir: str | Path, name: str = "model") -> Path:
    """training_log.csv plus the loss/learning-rate curves."""
    out = _ensure_dir(out_dir)
    with open(out / "training_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for entry in log.entries:
            writer.writerow([entry.epoch, f"{entry.train_loss:.8f}", f"{entry.val_loss:.8f}", entry.lr])
        writer.writerow([])
        writer.writerow(["stop_reason", log.stop_reason])
        writer.writerow(["best_epoch", log.best_epoch])

    epochs = [e.epoch for e in log.entries]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [e.train_loss for e in log.entries], label="train loss", marker="o", ms=3)
    ax.plot(epochs, [e.val_loss for e in log.entries], label="validation loss", marker="s", ms=3)
    ax.axvline(log.best_epoch, color="gray", ls="--", lw=1, label=f"best epoch {log.best_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"{name} training ({log.stop_reason})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "loss_curves.png", dpi=130)
    plt.close(fig)
    return out


def write_latency_report(stats: LatencyStats, out_dir: str | Path) -> Path:
    out = _ensure_dir(out_dir)
    with open(out / "latency.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["count", "mean_ms", "median_ms", "p95_ms", "fps"])
        writer.writerow(
            [stats.count, f"{stats.mean_ms:.4f}", f"{stats.median_ms:.4f}",
             f"{stats.p95_ms:.4f}", f"{stats.fps:.2f}"]
        )

    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = ["mean", "median", "p95"]
    values = [stats.mean_ms, stats.median_ms, stats.p95_ms]
    ax.bar(names, values, color=["#4878cf", "#6acc65", "#d65f5f"])
    ax.set_ylabel("latency (ms)")
    ax.set_title(f"per-scan latency over {stats.count} images ({stats.fps:.1f} FPS)")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.2f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "latency.png", dpi=130)
    plt.close(fig)
    return out


def write_chi_square_report(
    rows: Sequence[tuple[str, int, TestResult, float]],
    out_dir: str | Path,
) -> Path:
    """Rows of (name, total images, test result, Cramer's V) as CSV + chart."""
    out = _ensure_dir(out_dir)
    with open(out / "chi_square.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "total_images", "chi_square", "df", "p_value", "cramers_v"])
        for name, total, result, v in rows:
            writer.writerow(
                [name, total, f"{result.statistic:.4f}", result.df,
                 f"{result.p_value:.6g}", f"{v:.4f}"]
            )

    fig, ax = plt.subplots(figsize=(max(4.0, 1.0 + 0.8 * len(rows)), 3.5))
    names = [r[0] for r in rows]
    stats_values = [r[2].statistic for r in rows]
    bars = ax.bar(names, stats_values, color="#4878cf")
    for bar, (_, _, result, _) in zip(bars, rows):
        flag = "*" if result.p_value < 0.05 else ""
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(),
                f"p={result.p_value:.3g}{flag}", ha="center", va="bottom", fontsize=7)
    ax.set_ylabel("chi-square statistic")
    ax.set_title("defect-distribution independence tests")
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "chi_square.png", dpi=130)
    plt.close(fig)
    return out


def write_anova_report(
    rows: Sequence[tuple[str, TestResult, TestResult]],
    out_dir: str | Path,
) -> Path:
    """Rows of (name, Levene result, ANOVA result) as CSV + p-value chart."""
    out = _ensure_dir(out_dir)
    with open(out / "anova.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["name", "levene_w", "levene_p", "anova_f", "df_between", "df_within", "p_value"]
        )
        for name, levene, anova in rows:
            writer.writerow(
                [name, f"{levene.statistic:.4f}", f"{levene.p_value:.6g}",
                 f"{anova.statistic:.4f}", anova.df[0], anova.df[1],
                 f"{anova.p_value:.6g}"]
            )

    fig, ax = plt.subplots(figsize=(max(4.0, 1.0 + 0.8 * len(rows)), 3.5))
    names = [r[0] for r in rows]
    p_values = [r[2].p_value for r in rows]
    ax.bar(names, p_values, color="#6acc65")
    ax.axhline(0.05, color="red", ls="--", lw=1, label="p = 0.05")
    ax.set_ylabel("ANOVA p-value")
    ax.set_title("preprocessing-condition effect tests")
    ax.legend()
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "anova.png", dpi=130)
    plt.close(fig)
    return out
