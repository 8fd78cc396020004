"""Mask -> box extraction via 8-connected components."""

from typing import List, Tuple, Union

import numpy as np
from scipy import ndimage

from src.frames import BoundingBox, Detection, SegmentationMask

DEFAULT_MIN_AREA = 4

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _mask_values(mask: Union[SegmentationMask, np.ndarray]) -> np.ndarray:
    values = mask.values if isinstance(mask, SegmentationMask) else np.asarray(mask)
    if values.ndim != 2:
        raise ValueError(f"Mask must be 2-D, got shape {values.shape}")
    return values


def _components(values: np.ndarray, threshold: float, min_area: int) -> List[Tuple[BoundingBox, np.ndarray]]:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    labeled, count = ndimage.label(values > threshold, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    sizes = np.bincount(labeled.ravel(), minlength=count + 1)
    found = []
    for index, window in enumerate(ndimage.find_objects(labeled), start=1):
        if window is None or sizes[index] < min_area:
            continue
        rows, cols = window
        box = BoundingBox(float(cols.start), float(rows.start), float(cols.stop), float(rows.stop))
        found.append((box, labeled == index))
    found.sort(key=lambda item: (-item[0].area, item[0].y_min, item[0].x_min))
    return found


def mask_to_boxes(
    mask: Union[SegmentationMask, np.ndarray],
    threshold: float = 0.5,
    min_area: int = DEFAULT_MIN_AREA,
) -> List[BoundingBox]:
    """
    One tight box per 8-connected component of `mask > threshold`.

    Components with fewer than `min_area` pixels are discarded; boxes are
    sorted by area, largest first.
    """
    return [box for box, _ in _components(_mask_values(mask), threshold, min_area)]


def mask_detections(
    mask: Union[SegmentationMask, np.ndarray],
    threshold: float = 0.5,
    min_area: int = DEFAULT_MIN_AREA,
    class_id: int = 0,
) -> List[Detection]:
    """Detections from a predicted mask; score = mean mask value inside the component."""
    values = _mask_values(mask)
    detections = []
    for box, support in _components(values, threshold, min_area):
        score = float(np.clip(values[support].mean(), 0.0, 1.0))
        detections.append(Detection(box, score, class_id))
    return detections
