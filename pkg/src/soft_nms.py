"""IoU and Soft-NMS post-processing for candidate detections."""

import logging
import math
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.frames import BoundingBox, Detection

logger = logging.getLogger(__name__)


class SuppressionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Literal["gaussian", "linear", "hard"] = "gaussian"
    sigma: float = Field(0.5, gt=0, allow_inf_nan=False)
    overlap_threshold: float = Field(0.3, gt=0, lt=1)
    score_floor: float = Field(0.001, ge=0, lt=1)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _iou_one_to_many(box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    iw = np.minimum(box[2], boxes[:, 2]) - np.maximum(box[0], boxes[:, 0])
    ih = np.minimum(box[3], boxes[:, 3]) - np.maximum(box[1], boxes[:, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area = (box[2] - box[0]) * (box[3] - box[1])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    return inter / (area + areas - inter)


def _decay(overlaps: np.ndarray, cfg: SuppressionConfig) -> np.ndarray:
    if cfg.method == "gaussian":
        return np.exp(-(overlaps ** 2) / cfg.sigma)
    hit = overlaps >= cfg.overlap_threshold
    if cfg.method == "linear":
        return np.where(hit, 1.0 - overlaps, 1.0)
    return np.where(hit, 0.0, 1.0)


def _suppress_class(dets: Sequence[Detection], cfg: SuppressionConfig) -> List[Tuple[int, float]]:
    """Returns (position within `dets`, final score) in emission order."""
    boxes = np.array([d.box.as_tuple() for d in dets], dtype=np.float64)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    alive = scores >= cfg.score_floor
    emitted: List[Tuple[int, float]] = []
    while alive.any():
        candidates = np.flatnonzero(alive)
        # highest score, then larger area, then earlier input
        best = max(candidates, key=lambda i: (scores[i], areas[i], -i))
        emitted.append((int(best), float(scores[best])))
        alive[best] = False
        rest = np.flatnonzero(alive)
        if rest.size == 0:
            break
        scores[rest] = scores[rest] * _decay(_iou_one_to_many(boxes[best], boxes[rest]), cfg)
        alive[rest[scores[rest] < cfg.score_floor]] = False
    return emitted


def _validate_scores(dets: Sequence[Detection]) -> None:
    for d in dets:
        if not (isinstance(d.score, float) and math.isfinite(d.score) and 0.0 <= d.score <= 1.0):
            raise ValueError(f"Invalid score {d.score!r} for box {d.box.as_tuple()}")


def soft_nms(dets: Sequence[Detection], cfg: SuppressionConfig = SuppressionConfig()) -> List[Detection]:
    """
    Soft-NMS, each class independently.

    Repeatedly emits the best remaining detection M and decays the others by
    their overlap with M (gaussian, linear or hard); detections falling below
    cfg.score_floor are dropped. Output is sorted by final score descending,
    ties by larger area, then input order.
    """
    _validate_scores(dets)
    by_class: Dict[int, List[int]] = {}
    for index, d in enumerate(dets):
        by_class.setdefault(d.class_id, []).append(index)

    kept: List[Tuple[int, float]] = []
    for class_id in sorted(by_class):
        indices = by_class[class_id]
        for position, score in _suppress_class([dets[i] for i in indices], cfg):
            kept.append((indices[position], score))

    kept.sort(key=lambda item: (-item[1], -dets[item[0]].box.area, item[0]))
    logger.debug(f"soft_nms({cfg.method}): {len(dets)} -> {len(kept)} detections")
    return [dets[i].with_score(score) for i, score in kept]


def hard_nms(dets: Sequence[Detection], overlap_threshold: float = 0.3) -> List[Detection]:
    """Standard NMS: soft_nms with the hard rule; zeroed detections are dropped."""
    return soft_nms(dets, SuppressionConfig(method="hard", overlap_threshold=overlap_threshold))
