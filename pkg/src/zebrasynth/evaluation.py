"""Detection metrics: IoU, greedy confidence-ordered matching, average
precision (101-point interpolation and continuous area variants), and
per-dataset aggregation with cardinality weighting.

AP at a threshold follows the usual protocol: detections sorted by
descending confidence across the whole dataset, cumulative TP/FP turned
into a precision-recall curve, monotone precision envelope, then either
the mean of 101 sampled recall points or the exact area under the
envelope.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_POINTS = np.arange(101) / 100.0
MAX_DETECTIONS_PER_IMAGE = 100
AP_STYLES = ("coco101", "voc_continuous")


class EvaluationError(ValueError):
    """Inconsistent evaluation input."""


@dataclass(frozen=True)
class Detection:
    """Detector output: xyxy box plus confidence in [0, 1]."""

    image_id: str | int
    box: tuple[float, float, float, float]
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise EvaluationError(f"confidence must be finite in [0, 1], got {self.confidence}")


def iou(a, b) -> float:
    """Intersection over union of two xyxy boxes; degenerate boxes give 0."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    area_a = max(0.0, ax1 - ax0) * max(0.0, ay1 - ay0)
    area_b = max(0.0, bx1 - bx0) * max(0.0, by1 - by0)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True)
class MatchRecord:
    """One detection's fate at a threshold, in original input order."""

    det_index: int
    image_id: str | int
    confidence: float
    tp: bool
    matched_gt: int | None  # index into the image's ground-truth list


def _group_by_image(items, key=lambda x: x.image_id):
    groups: dict = {}
    for k, item in enumerate(items):
        groups.setdefault(key(item), []).append((k, item))
    return groups


def match_detections(gts, dets, iou_threshold: float) -> list[MatchRecord]:
    """Greedy per-image matching.

    Detections are processed in order of descending confidence (stable on
    ties, so input order breaks them); each takes the unmatched ground
    truth with the highest IoU at or above the threshold, lowest index on
    IoU ties. Every ground truth matches at most once.
    """
    gt_groups = _group_by_image(gts)
    det_groups = _group_by_image(dets)
    records = []
    for image_id, image_dets in det_groups.items():
        gt_boxes = [g.xyxy if hasattr(g, "xyxy") else tuple(g) for _, g in gt_groups.get(image_id, [])]
        taken = [False] * len(gt_boxes)
        order = sorted(range(len(image_dets)), key=lambda i: -image_dets[i][1].confidence)
        for i in order:
            det_index, det = image_dets[i]
            best_iou = -1.0
            best_g = None
            for g, gt_box in enumerate(gt_boxes):
                if taken[g]:
                    continue
                v = iou(gt_box, det.box)
                if v >= iou_threshold and v > best_iou:
                    best_iou = v
                    best_g = g
            if best_g is not None:
                taken[best_g] = True
            records.append(
                MatchRecord(det_index, image_id, det.confidence, best_g is not None, best_g)
            )
    records.sort(key=lambda r: r.det_index)
    return records


def average_precision(
    confidences, tp_flags, n_gt: int, style: str = "coco101"
) -> float:
    """AP from per-detection confidences and TP flags.

    n_gt = 0 with no detections is undefined (NaN, caller skips the
    dataset); n_gt = 0 with detections scores 0.
    """
    if style not in AP_STYLES:
        raise EvaluationError(f"unknown AP style {style!r}, expected one of {AP_STYLES}")
    confidences = np.asarray(confidences, dtype=float)
    tp_flags = np.asarray(tp_flags, dtype=bool)
    if n_gt < 0:
        raise EvaluationError(f"n_gt must be nonnegative, got {n_gt}")
    if n_gt == 0:
        return 0.0 if len(confidences) else float("nan")
    if len(confidences) == 0:
        return 0.0
    order = np.argsort(-confidences, kind="stable")
    tp = tp_flags[order]
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # Monotone envelope from the right.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if style == "coco101":
        idx = np.searchsorted(recall, RECALL_POINTS, side="left")
        sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
        return float(sampled.mean())
    r_prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - r_prev) * envelope))


@dataclass(eq=False)
class ApResult:
    ap50: float
    ap_coco: float
    per_threshold: dict
    pr50_recall: np.ndarray = field(repr=False)
    pr50_precision: np.ndarray = field(repr=False)
    n_images: int = 0
    n_gt: int = 0

    def to_dict(self) -> dict:
        return {
            "ap50": self.ap50,
            "ap": self.ap_coco,
            "per_threshold": {str(k): v for k, v in self.per_threshold.items()},
            "n_images": self.n_images,
            "n_gt": self.n_gt,
        }


def _cap_detections(dets, max_per_image: int):
    groups = _group_by_image(dets)
    kept = []
    for image_id in groups:
        image_dets = groups[image_id]
        order = sorted(range(len(image_dets)), key=lambda i: -image_dets[i][1].confidence)
        for i in order[:max_per_image]:
            kept.append(image_dets[i])
    kept.sort(key=lambda pair: pair[0])
    return [d for _, d in kept]


def evaluate_dataset(
    gts,
    dets,
    style: str = "coco101",
    iou_thresholds=COCO_IOU_THRESHOLDS,
    max_dets: int = MAX_DETECTIONS_PER_IMAGE,
) -> ApResult:
    """AP50 and the mean AP over the 0.50:0.05:0.95 thresholds."""
    gt_images = {g.image_id for g in gts}
    capped = _cap_detections(list(dets), max_dets)
    n_gt = len(gts)
    n_images = len(gt_images | {d.image_id for d in capped})

    per_threshold = {}
    pr50 = (np.zeros(0), np.zeros(0))
    for thr in iou_thresholds:
        records = match_detections(gts, capped, thr)
        confs = [r.confidence for r in records]
        flags = [r.tp for r in records]
        per_threshold[thr] = average_precision(confs, flags, n_gt, style=style)
        if thr == 0.5 and confs:
            order = np.argsort(-np.asarray(confs), kind="stable")
            tp = np.asarray(flags, dtype=bool)[order]
            tp_cum = np.cumsum(tp)
            fp_cum = np.cumsum(~tp)
            pr50 = (tp_cum / max(n_gt, 1), tp_cum / (tp_cum + fp_cum))
    ap_values = [v for v in per_threshold.values() if not math.isnan(v)]
    ap50 = per_threshold.get(0.5, float("nan"))
    ap_coco = float(np.mean(ap_values)) if ap_values else float("nan")
    return ApResult(
        ap50=ap50,
        ap_coco=ap_coco,
        per_threshold=per_threshold,
        pr50_recall=pr50[0],
        pr50_precision=pr50[1],
        n_images=n_images,
        n_gt=n_gt,
    )


@dataclass(eq=False)
class EvalReport:
    """Per-dataset metrics plus cardinality-weighted and simple averages."""

    rows: list  # (name, ap50, ap, cardinality)
    weighted_ap50: float
    weighted_ap: float
    mean_ap50: float
    mean_ap: float

    def to_dict(self) -> dict:
        return {
            "datasets": [
                {"name": n, "ap50": a50, "ap": a, "cardinality": c}
                for n, a50, a, c in self.rows
            ],
            "weighted_avg": {"ap50": self.weighted_ap50, "ap": self.weighted_ap},
            "avg": {"ap50": self.mean_ap50, "ap": self.mean_ap},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        names = [r[0] for r in self.rows] + ["Weighted avg.", "Avg."]
        ap50s = [r[1] for r in self.rows] + [self.weighted_ap50, self.mean_ap50]
        aps = [r[2] for r in self.rows] + [self.weighted_ap, self.mean_ap]
        width = max(len(n) for n in names)
        lines = [f"{'dataset'.ljust(width)}  {'mAP50':>7}  {'mAP':>7}"]
        for n, a50, a in zip(names, ap50s, aps):
            lines.append(f"{n.ljust(width)}  {a50:7.3f}  {a:7.3f}")
        return "\n".join(lines)


def aggregate(per_dataset) -> EvalReport:
    """Combine (name, ap50, ap, cardinality) rows into one report.

    The weighted average weighs each dataset by its cardinality; the
    simple average is the plain mean.
    """
    rows = [(str(n), float(a50), float(a), int(c)) for n, a50, a, c in per_dataset]
    if not rows:
        raise EvaluationError("aggregate needs at least one dataset row")
    if any(c <= 0 for _, _, _, c in rows):
        raise EvaluationError("cardinalities must be positive")
    total = sum(c for _, _, _, c in rows)
    weighted_ap50 = sum(a50 * c for _, a50, _, c in rows) / total
    weighted_ap = sum(a * c for _, _, a, c in rows) / total
    mean_ap50 = sum(a50 for _, a50, _, _ in rows) / len(rows)
    mean_ap = sum(a for _, _, a, _ in rows) / len(rows)
    return EvalReport(
        rows=rows,
        weighted_ap50=weighted_ap50,
        weighted_ap=weighted_ap,
        mean_ap50=mean_ap50,
        mean_ap=mean_ap,
    )
