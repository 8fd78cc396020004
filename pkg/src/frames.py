"""Domain types: frames, masks, boxes and detections."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np


class ClassLabel(enum.IntEnum):
    """Binary frame label. Index doubles as the position in a ProbVector."""

    NON_BLEEDING = 0
    BLEEDING = 1

    @property
    def tag(self) -> str:
        return "bleeding" if self is ClassLabel.BLEEDING else "non_bleeding"

    @classmethod
    def parse(cls, value) -> "ClassLabel":
        """Accept 'bleeding'/'non_bleeding', 0/1 or an existing label."""
        if isinstance(value, ClassLabel):
            return value
        text = str(value).strip().lower()
        if text in ("bleeding", "1"):
            return cls.BLEEDING
        if text in ("non_bleeding", "nonbleeding", "non-bleeding", "0"):
            return cls.NON_BLEEDING
        raise ValueError(f"Unknown class label: {value!r}")


class MaskKind(str, enum.Enum):
    GROUND_TRUTH = "ground_truth"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels, half-open: [x_min, x_max) x [y_min, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"Box coordinates must be finite: {coords}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"Box starts outside the image: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"Degenerate box: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def fits(self, width: float, height: float) -> bool:
        return self.x_max <= width and self.y_max <= height

    @classmethod
    def from_center(
        cls, cx: float, cy: float, w: float, h: float, width: float = 1.0, height: float = 1.0
    ) -> "BoundingBox":
        """Build a pixel box from normalized center/size, clamped to the image."""
        x_min = min(max((cx - w / 2) * width, 0.0), width)
        y_min = min(max((cy - h / 2) * height, 0.0), height)
        x_max = min(max((cx + w / 2) * width, 0.0), width)
        y_max = min(max((cy + h / 2) * height, 0.0), height)
        return cls(x_min, y_min, x_max, y_max)

    def to_center(self, width: float = 1.0, height: float = 1.0) -> Tuple[float, float, float, float]:
        return (
            (self.x_min + self.x_max) / 2 / width,
            (self.y_min + self.y_max) / 2 / height,
            self.width / width,
            self.height / height,
        )


LabeledBox = Tuple[int, BoundingBox]


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float
    class_id: int = 0

    def __post_init__(self):
        try:
            score = float(self.score)
        except (TypeError, ValueError):
            raise ValueError(f"Invalid score {self.score!r}: not a number") from None
        # NaN fails both comparisons
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"Invalid score {self.score!r}: must lie in [0, 1]")
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "class_id", int(self.class_id))

    def with_score(self, score: float) -> "Detection":
        return replace(self, score=float(score))


@dataclass(frozen=True, eq=False)
class ImageFrame:
    """RGB image with values in [0, 1], stored H x W x 3."""

    pixels: np.ndarray
    id: str
    original_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        pixels = self.pixels
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"Frame {self.id}: expected H x W x 3 pixels, got {pixels.shape}")
        if pixels.shape[0] < 8 or pixels.shape[1] < 8:
            raise ValueError(f"Frame {self.id}: frames must be at least 8 x 8, got {pixels.shape[:2]}")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError(f"Frame {self.id}: pixel values must lie in [0, 1]")
        if self.original_shape is None:
            object.__setattr__(self, "original_shape", (pixels.shape[0], pixels.shape[1]))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def check_divisible(self, stage_count: int) -> None:
        factor = 2 ** stage_count
        if self.height % factor or self.width % factor:
            raise ValueError(
                f"Frame {self.id}: size {self.height}x{self.width} is not divisible by "
                f"2^{stage_count}={factor}"
            )


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    values: np.ndarray
    kind: MaskKind = MaskKind.GROUND_TRUTH

    def __post_init__(self):
        values = self.values
        if values.ndim != 2:
            raise ValueError(f"Mask must be 2-D, got shape {values.shape}")
        if self.kind is MaskKind.GROUND_TRUTH:
            if not np.isin(values, (0, 1)).all():
                raise ValueError("Ground-truth mask values must be 0 or 1")
        elif values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("Predicted mask values must lie in [0, 1]")

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.values.shape[0]), int(self.values.shape[1]))

    def is_empty(self) -> bool:
        return not bool(np.any(self.values))

    @classmethod
    def zeros(cls, height: int, width: int) -> "SegmentationMask":
        return cls(np.zeros((height, width), dtype=np.float32), MaskKind.GROUND_TRUTH)


@dataclass(frozen=True, eq=False)
class AnnotatedFrame:
    image: ImageFrame
    label: ClassLabel
    mask: Optional[SegmentationMask] = None
    gt_boxes: Tuple[BoundingBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "label", ClassLabel.parse(self.label))
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        frame_id = self.image.id
        if self.mask is not None and self.mask.shape != (self.image.height, self.image.width):
            raise ValueError(
                f"Frame {frame_id}: mask shape {self.mask.shape} does not match image "
                f"{(self.image.height, self.image.width)}"
            )
        if self.label is ClassLabel.BLEEDING:
            if self.mask is None:
                raise ValueError(f"Frame {frame_id}: missing mask for bleeding frame")
            if self.mask.is_empty():
                raise ValueError(f"Frame {frame_id}: bleeding frame has an all-zero mask")
        else:
            if self.mask is not None and not self.mask.is_empty():
                raise ValueError(f"Frame {frame_id}: non-bleeding frame has a non-zero mask")
            if self.gt_boxes:
                raise ValueError(f"Frame {frame_id}: non-bleeding frame carries boxes")
        for box in self.gt_boxes:
            if not box.fits(self.image.width, self.image.height):
                raise ValueError(f"Frame {frame_id}: box {box.as_tuple()} exceeds image bounds")

    @property
    def id(self) -> str:
        return self.image.id


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[AnnotatedFrame, ...]
    val: Tuple[AnnotatedFrame, ...]
    seed: int
