"""Evaluator core: classification scores and detection AP / mAP / IoU."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.frames import BoundingBox, ClassLabel, Detection, LabeledBox
from src.soft_nms import iou

logger = logging.getLogger(__name__)

Interpolation = Literal["all_points", "coco101"]

COCO_THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
MATCH_IOU = 0.5


class ClassificationScores(BaseModel):
    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


class DetectionScores(BaseModel):
    average_precision: float
    map_50: float
    map_50_95: float
    average_iou: float


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(precision: float, recall: float) -> float:
    total = precision + recall
    return 2.0 * precision * recall / total if total > 0 else 0.0


def confusion_counts(preds: Sequence[ClassLabel], truths: Sequence[ClassLabel]) -> Dict[str, int]:
    """TP/FP/FN/TN with bleeding as the positive class."""
    if len(preds) != len(truths):
        raise ValueError(f"Length mismatch: {len(preds)} predictions vs {len(truths)} ground truths")
    if not preds:
        raise ValueError("Need at least one prediction")
    p = np.array([int(ClassLabel.parse(v)) for v in preds])
    t = np.array([int(ClassLabel.parse(v)) for v in truths])
    return {
        "tp": int(np.sum((p == 1) & (t == 1))),
        "fp": int(np.sum((p == 1) & (t == 0))),
        "fn": int(np.sum((p == 0) & (t == 1))),
        "tn": int(np.sum((p == 0) & (t == 0))),
    }


def classification_metrics(preds: Sequence[ClassLabel], truths: Sequence[ClassLabel]) -> ClassificationScores:
    """
    Binary (bleeding-positive) accuracy/precision/recall/F1 plus macro averages.

    Zero denominators yield 0.
    """
    c = confusion_counts(preds, truths)
    total = c["tp"] + c["fp"] + c["fn"] + c["tn"]
    precision = _ratio(c["tp"], c["tp"] + c["fp"])
    recall = _ratio(c["tp"], c["tp"] + c["fn"])
    # non-bleeding as positive
    precision_n = _ratio(c["tn"], c["tn"] + c["fn"])
    recall_n = _ratio(c["tn"], c["tn"] + c["fp"])
    return ClassificationScores(
        accuracy=_ratio(c["tp"] + c["tn"], total),
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        macro_precision=(precision + precision_n) / 2,
        macro_recall=(recall + recall_n) / 2,
        macro_f1=(_f1(precision, recall) + _f1(precision_n, recall_n)) / 2,
    )


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[BoundingBox],
    iou_thr: float = MATCH_IOU,
) -> List[Tuple[int, Optional[int]]]:
    """
    Greedy matching by descending score (ties by input order).

    Each detection takes the unmatched ground truth of highest IoU (ties by
    lower index) if that IoU >= iou_thr; otherwise it is a false positive.

    Returns:
        (detection index, ground-truth index or None) in processing order
    """
    if not 0.0 < iou_thr < 1.0:
        raise ValueError(f"iou_thr must lie in (0, 1), got {iou_thr}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken = [False] * len(gts)
    matches: List[Tuple[int, Optional[int]]] = []
    for i in order:
        best, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            overlap = iou(dets[i].box, gt)
            if overlap > best_iou:
                best, best_iou = j, overlap
        if best is not None and best_iou >= iou_thr:
            taken[best] = True
            matches.append((i, best))
        else:
            matches.append((i, None))
    return matches


@dataclass
class ImageRecord:
    """Detections and ground truth of one image."""

    image_id: str
    detections: List[Detection] = field(default_factory=list)
    ground_truth: List[LabeledBox] = field(default_factory=list)


def _check_corpus(records: Sequence[ImageRecord]) -> None:
    seen = set()
    for rec in records:
        if rec.image_id in seen:
            raise ValueError(f"Duplicate image id {rec.image_id!r}")
        seen.add(rec.image_id)
    if not any(rec.ground_truth for rec in records):
        raise ValueError("Detection metrics need at least one ground-truth box")


def _gt_classes(records: Sequence[ImageRecord]) -> List[int]:
    return sorted({c for rec in records for c, _ in rec.ground_truth})


def _match_class(rec: ImageRecord, class_id: int, iou_thr: float):
    dets = [d for d in rec.detections if d.class_id == class_id]
    gts = [b for c, b in rec.ground_truth if c == class_id]
    return dets, gts, match_detections(dets, gts, iou_thr)


def interpolated_ap(recall: np.ndarray, precision: np.ndarray, interpolation: Interpolation = "all_points") -> float:
    """Area under the precision envelope (all points) or its 101-point COCO sampling."""
    if recall.size == 0:
        return 0.0
    if interpolation == "coco101":
        envelope = np.maximum.accumulate(precision[::-1])[::-1]
        points = np.linspace(0.0, 1.0, 101)
        idx = np.searchsorted(recall, points, side="left")
        sampled = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
        return float(sampled.mean())
    if interpolation != "all_points":
        raise ValueError(f"Unknown interpolation: {interpolation}")
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _class_ap(records: Sequence[ImageRecord], class_id: int, iou_thr: float, interpolation: Interpolation) -> float:
    outcomes = []
    n_gt = 0
    for image_order, rec in enumerate(records):
        dets, gts, matches = _match_class(rec, class_id, iou_thr)
        n_gt += len(gts)
        for det_index, gt_index in matches:
            outcomes.append((-dets[det_index].score, image_order, det_index, gt_index is not None))
    if n_gt == 0:
        raise ValueError(f"No ground-truth boxes for class {class_id}")
    outcomes.sort(key=lambda o: o[:3])
    hits = np.array([o[3] for o in outcomes], dtype=np.float64)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, np.finfo(np.float64).eps)
    return interpolated_ap(recall, precision, interpolation)


def average_precision(
    records: Sequence[ImageRecord],
    iou_thr: float = MATCH_IOU,
    interpolation: Interpolation = "all_points",
) -> float:
    """AP pooled over images, averaged over the ground-truth classes."""
    _check_corpus(records)
    classes = _gt_classes(records)
    return float(np.mean([_class_ap(records, c, iou_thr, interpolation) for c in classes]))


def ap_by_threshold(
    records: Sequence[ImageRecord],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
    interpolation: Interpolation = "all_points",
) -> Dict[float, float]:
    return {thr: average_precision(records, thr, interpolation) for thr in thresholds}


def map_range(
    records: Sequence[ImageRecord],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
    interpolation: Interpolation = "all_points",
) -> float:
    """Mean AP over IoU thresholds (default 0.50, 0.55, ..., 0.95)."""
    per_threshold = ap_by_threshold(records, thresholds, interpolation)
    return float(np.mean(list(per_threshold.values())))


def map_50(records: Sequence[ImageRecord], interpolation: Interpolation = "all_points") -> float:
    return average_precision(records, 0.5, interpolation)


def average_iou(records: Sequence[ImageRecord], iou_thr: float = MATCH_IOU) -> float:
    """Mean IoU over matched (detection, ground truth) pairs; 0 when nothing matches."""
    _check_corpus(records)
    overlaps = []
    for rec in records:
        for class_id in sorted({d.class_id for d in rec.detections} | {c for c, _ in rec.ground_truth}):
            dets, gts, matches = _match_class(rec, class_id, iou_thr)
            overlaps += [iou(dets[i].box, gts[j]) for i, j in matches if j is not None]
    return float(np.mean(overlaps)) if overlaps else 0.0


def detection_metrics(records: Sequence[ImageRecord], interpolation: Interpolation = "all_points") -> DetectionScores:
    """AP (all-points at 0.5), mAP@0.5 and mAP@0.5:0.95 (chosen interpolation), average IoU."""
    per_threshold = ap_by_threshold(records, COCO_THRESHOLDS, interpolation)
    scores = DetectionScores(
        average_precision=average_precision(records, 0.5, "all_points"),
        map_50=per_threshold[0.5],
        map_50_95=float(np.mean(list(per_threshold.values()))),
        average_iou=average_iou(records),
    )
    logger.info(f"Detection metrics over {len(records)} images: {scores.model_dump()}")
    return scores
