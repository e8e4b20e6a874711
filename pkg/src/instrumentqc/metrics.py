"""Evaluation metrics: classification scores, detection AP, latency.

Average precision follows the all-points protocol: detections are
ranked by confidence (ties by submission order), greedily matched to
unmatched ground truths of the same label at the given IoU threshold
(highest IoU first), and the area under the precision-recall curve is
taken after making the precision envelope monotone non-increasing.
mAP@50-95 averages over the ten thresholds 0.50, 0.55, ..., 0.95.
"""

from __future__ import annotations

import json
import statistics
import time
from fractions import Fraction
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import ClassProbabilities

__all__ = [
    "ConfusionMatrix",
    "BoundingBox",
    "Detection",
    "LabelScores",
    "MetricsReport",
    "LatencyStats",
    "confusion_matrix",
    "classification_report",
    "roc_auc",
    "iou",
    "average_precision",
    "map_range",
    "MAP_RANGE_THRESHOLDS",
    "benchmark_latency",
]

MAP_RANGE_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix indexed [true][predicted] over an ordered label set."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.labels)
        if counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(
    pairs: Sequence[tuple[str, str]], labels: Sequence[str]
) -> ConfusionMatrix:
    """Count (true, predicted) occurrences over the declared label set."""
    labels = tuple(labels)
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for true, predicted in pairs:
        if true not in index or predicted not in index:
            raise ValueError(f"pair ({true!r}, {predicted!r}) outside label set {labels}")
        counts[index[true], index[predicted]] += 1
    return ConfusionMatrix(labels, counts)


@dataclass(frozen=True)
class LabelScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    """Classification quality summary; detection fields filled when available."""

    accuracy: float
    per_label: dict[str, LabelScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    roc_auc: Optional[float] = None
    map50: Optional[float] = None
    map50_95: Optional[float] = None

    def __post_init__(self) -> None:
        values = [self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1]
        values += [v for v in (self.roc_auc, self.map50, self.map50_95) if v is not None]
        for scores in self.per_label.values():
            values += [scores.precision, scores.recall, scores.f1]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("all report values must lie in [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_label": {
                label: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                for label, s in self.per_label.items()
            },
            "roc_auc_averaging": "macro one-vs-rest",
        }
        for name in ("roc_auc", "map50", "map50_95"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _safe_div(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def classification_report(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus per-label and macro precision/recall/F1 (0/0 counts as 0)."""
    if cm.total == 0:
        raise ValueError("cannot report on an empty confusion matrix")
    counts = cm.counts
    per_label = {}
    for i, label in enumerate(cm.labels):
        tp = int(counts[i, i])
        precision = _safe_div(tp, int(counts[:, i].sum()))
        recall = _safe_div(tp, int(counts[i, :].sum()))
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_label[label] = LabelScores(precision, recall, f1)
    k = len(cm.labels)
    return MetricsReport(
        accuracy=float(np.trace(counts)) / cm.total,
        per_label=per_label,
        macro_precision=sum(s.precision for s in per_label.values()) / k,
        macro_recall=sum(s.recall for s in per_label.values()) / k,
        macro_f1=sum(s.f1 for s in per_label.values()) / k,
    )


def roc_auc(scores: Sequence[ClassProbabilities], truths: Sequence[str]) -> float:
    """Macro one-vs-rest AUC via the Mann-Whitney rank statistic.

    Ties contribute one half. Labels lacking either a positive or a
    negative sample are skipped; with no eligible label at all this is
    an error.
    """
    if len(scores) != len(truths):
        raise ValueError("scores and truths must have the same length")
    labels = scores[0].labels if scores else ()
    aucs = []
    for label in labels:
        positives = [s.probability_of(label) for s, t in zip(scores, truths) if t == label]
        negatives = [s.probability_of(label) for s, t in zip(scores, truths) if t != label]
        if not positives or not negatives:
            continue
        combined = sorted(positives + negatives)
        # midranks: average 1-based rank per tied value
        ranks: dict[float, float] = {}
        i = 0
        while i < len(combined):
            j = i
            while j < len(combined) and combined[j] == combined[i]:
                j += 1
            ranks[combined[i]] = (i + 1 + j) / 2.0
            i = j
        rank_sum = sum(ranks[p] for p in positives)
        n_pos, n_neg = len(positives), len(negatives)
        aucs.append((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
    if not aucs:
        raise ValueError("no label has both positive and negative samples")
    return sum(aucs) / len(aucs)


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError(f"degenerate box: {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    label: str
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    intersection = ix * iy
    return intersection / (a.area + b.area - intersection)


def average_precision(
    dets: Sequence[Detection],
    truths: Sequence[tuple[BoundingBox, str]],
    iou_threshold: float,
) -> dict[str, float]:
    """All-points AP per label appearing in the ground truth.

    Labels with no ground truth are skipped (AP undefined); a label with
    truths but no detections scores 0.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou threshold must lie in (0, 1), got {iou_threshold}")
    result: dict[str, float] = {}
    truth_labels = {label for _, label in truths}
    for label in sorted(truth_labels):
        label_truths = [box for box, l in truths if l == label]
        label_dets = [d for d in dets if d.label == label]
        # stable sort keeps earlier submissions first among equal confidences
        label_dets = sorted(label_dets, key=lambda d: -d.confidence)
        matched: set[int] = set()
        tp_flags: list[bool] = []
        for det in label_dets:
            best_idx, best_iou = -1, -1.0
            for idx, truth_box in enumerate(label_truths):
                if idx in matched:
                    continue
                overlap = iou(det.box, truth_box)
                if overlap >= iou_threshold and overlap > best_iou:
                    best_idx, best_iou = idx, overlap
            if best_idx >= 0:
                matched.add(best_idx)
                tp_flags.append(True)
            else:
                tp_flags.append(False)
        result[label] = _all_points_ap(tp_flags, len(label_truths))
    return result


def _all_points_ap(tp_flags: Sequence[bool], n_truths: int) -> float:
    # exact rational arithmetic: AP of a finite detection list is a ratio of
    # small integers, so the result is bit-identical across evaluators
    if n_truths == 0:
        return 0.0
    tp = 0
    precisions = []
    recalls = []
    for i, flag in enumerate(tp_flags, start=1):
        tp += int(flag)
        precisions.append(Fraction(tp, i))
        recalls.append(Fraction(tp, n_truths))
    mrec = [Fraction(0)] + recalls + [Fraction(1)]
    mpre = [Fraction(0)] + precisions + [Fraction(0)]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    ap = Fraction(0)
    for i in range(1, len(mrec)):
        if mrec[i] != mrec[i - 1]:
            ap += (mrec[i] - mrec[i - 1]) * mpre[i]
    return float(ap)


def map_range(
    dets: Sequence[Detection],
    truths: Sequence[tuple[BoundingBox, str]],
) -> tuple[float, float]:
    """(mAP@50, mAP@50-95) over the ten-threshold grid."""
    per_threshold = []
    map50 = 0.0
    for threshold in MAP_RANGE_THRESHOLDS:
        aps = average_precision(dets, truths, threshold)
        mean_ap = sum(aps.values()) / len(aps) if aps else 0.0
        per_threshold.append(mean_ap)
        if threshold == 0.50:
            map50 = mean_ap
    return map50, sum(per_threshold) / len(per_threshold)


@dataclass(frozen=True)
class LatencyStats:
    """Per-scan wall-clock timing summary in milliseconds."""

    count: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    fps: float

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("latency stats need at least one sample")
        if abs(self.fps * self.mean_ms - 1000.0) > 1e-9:
            raise ValueError("fps must equal 1000 / mean latency")

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "p95_ms": self.p95_ms,
            "fps": self.fps,
        }


def benchmark_latency(
    pipeline_fn: Callable,
    images: Sequence,
    warmup: int = 0,
) -> LatencyStats:
    """Time the pipeline over each image on a single thread.

    Warmup iterations cycle through the images unrecorded; each timed
    call uses the monotonic performance counter. FPS is 1000 / mean.
    """
    if len(images) == 0:
        raise ValueError("need at least one image to benchmark")
    for i in range(warmup):
        pipeline_fn(images[i % len(images)])
    samples = []
    for image in images:
        start = time.perf_counter()
        pipeline_fn(image)
        samples.append((time.perf_counter() - start) * 1000.0)
    mean = sum(samples) / len(samples)
    return LatencyStats(
        count=len(samples),
        mean_ms=mean,
        median_ms=float(statistics.median(samples)),
        p95_ms=float(np.percentile(samples, 95)),
        fps=1000.0 / mean,
    )
