"""Dataset loader: reads frames, masks and YOLO box files; stratified splitting."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict

from src.frames import (
    AnnotatedFrame,
    BoundingBox,
    ClassLabel,
    DatasetSplit,
    ImageFrame,
    LabeledBox,
    MaskKind,
    SegmentationMask,
)
from src.image_io import list_images, read_mask, read_rgb
from src.seeding import DEFAULT_SEED, substream
from src.utils.workers import ordered_map

logger = logging.getLogger(__name__)


class DatasetLayout(BaseModel):
    """Maps dataset roles to subdirectories of the dataset root."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    images_bleeding: str = "images/bleeding"
    masks_bleeding: str = "masks/bleeding"
    boxes_bleeding: str = "boxes/bleeding"
    images_nonbleeding: str = "images/non_bleeding"


def load_layout(path: Union[str, Path]) -> DatasetLayout:
    """Load a flat key: value layout file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Layout config not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Layout config {path} must be a key: value mapping")
    return DatasetLayout(**data)


def dump_layout(layout: DatasetLayout, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(layout.model_dump(), f, sort_keys=True)
    return path


def _parse_float(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"line {lineno}: non-numeric token {token!r}") from None


def _parse_class(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ValueError(f"line {lineno}: non-numeric class token {token!r}") from None


def parse_yolo_boxes(text: str, width: float, height: float) -> List[LabeledBox]:
    """
    Parse YOLO lines "class cx cy w h" (normalized) into pixel boxes.

    Args:
        text: File contents; blank lines are skipped
        width: Image width in pixels
        height: Image height in pixels

    Returns:
        List of (class_id, BoundingBox), boxes clamped to the image
    """
    boxes: List[LabeledBox] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields 'class cx cy w h', got {len(tokens)}")
        class_id = _parse_class(tokens[0], lineno)
        cx, cy, w, h = (_parse_float(t, lineno) for t in tokens[1:])
        if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            raise ValueError(f"line {lineno}: coordinate out of range [0, 1]")
        try:
            box = BoundingBox.from_center(cx, cy, w, h, width, height)
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
        boxes.append((class_id, box))
    return boxes


def format_yolo_boxes(boxes: Sequence[LabeledBox], width: float, height: float) -> str:
    """Inverse of parse_yolo_boxes: one 'class cx cy w h' line per box."""
    lines = []
    for class_id, box in boxes:
        cx, cy, w, h = box.to_center(width, height)
        lines.append(f"{int(class_id)} {cx:.10g} {cy:.10g} {w:.10g} {h:.10g}")
    return "".join(line + "\n" for line in lines)


def pad_to_multiple(array: np.ndarray, multiple: int) -> np.ndarray:
    """Zero-pad the bottom/right edges so H and W are multiples of `multiple`."""
    height, width = array.shape[:2]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if not pad_h and not pad_w:
        return array
    pad = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, pad, mode="constant")


def load_image_frame(path: Path, stage_count: int, frame_id: Optional[str] = None) -> ImageFrame:
    pixels = read_rgb(path)
    original = (pixels.shape[0], pixels.shape[1])
    padded = pad_to_multiple(pixels, 2 ** stage_count)
    return ImageFrame(padded, frame_id or path.stem, original_shape=original)


def load_images(directory: Union[str, Path], stage_count: int = 3) -> List[ImageFrame]:
    """Load every image directly under `directory` (sorted), padded to stage-divisible size."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Image directory not found: {directory}")
    return ordered_map(lambda p: load_image_frame(p, stage_count), list_images(directory))


def _load_bleeding(path: Path, masks_dir: Path, boxes_dir: Path, stage_count: int) -> AnnotatedFrame:
    image = load_image_frame(path, stage_count)
    mask_path = masks_dir / f"{path.stem}.png"
    if not mask_path.exists():
        raise FileNotFoundError(f"missing mask for bleeding image {path} (expected {mask_path})")
    mask = read_mask(mask_path)
    original_h, original_w = image.original_shape
    if mask.shape != (original_h, original_w):
        raise ValueError(f"Mask {mask_path} has shape {mask.shape}, image is {(original_h, original_w)}")
    mask = pad_to_multiple(mask, 2 ** stage_count)
    boxes: Tuple[BoundingBox, ...] = ()
    box_path = boxes_dir / f"{path.stem}.txt"
    if box_path.exists():
        try:
            parsed = parse_yolo_boxes(box_path.read_text(encoding="utf-8"), original_w, original_h)
        except ValueError as e:
            raise ValueError(f"{box_path}: {e}") from None
        boxes = tuple(box for _, box in parsed)
    return AnnotatedFrame(image, ClassLabel.BLEEDING, SegmentationMask(mask, MaskKind.GROUND_TRUTH), boxes)


def _load_nonbleeding(path: Path, stage_count: int) -> AnnotatedFrame:
    image = load_image_frame(path, stage_count)
    return AnnotatedFrame(image, ClassLabel.NON_BLEEDING, SegmentationMask.zeros(image.height, image.width))


def load_dataset(
    root: Union[str, Path],
    layout: Optional[DatasetLayout] = None,
    stage_count: int = 3,
) -> List[AnnotatedFrame]:
    """
    Load all annotated frames under `root`.

    Bleeding frames come first, then non-bleeding, each in sorted-path order.
    Non-bleeding frames get an all-zero mask.

    Args:
        root: Dataset root directory
        layout: Role -> subdirectory mapping (defaults to DatasetLayout())
        stage_count: Encoder depth S; frames are padded to multiples of 2^S

    Returns:
        List of AnnotatedFrame
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"Dataset root not found: {root}")
    layout = layout or DatasetLayout()
    images_b = root / layout.images_bleeding
    masks_b = root / layout.masks_bleeding
    boxes_b = root / layout.boxes_bleeding
    images_n = root / layout.images_nonbleeding

    bleeding_paths = list_images(images_b) if images_b.is_dir() else []
    nonbleeding_paths = list_images(images_n) if images_n.is_dir() else []
    if not bleeding_paths and not nonbleeding_paths:
        raise FileNotFoundError(f"No images found under {images_b} or {images_n}")

    stems: Dict[str, Path] = {}
    for path in bleeding_paths + nonbleeding_paths:
        if path.stem in stems:
            raise ValueError(f"Duplicate frame id {path.stem!r}: {stems[path.stem]} and {path}")
        stems[path.stem] = path

    bleeding_stems = {p.stem for p in bleeding_paths}
    if boxes_b.is_dir():
        for box_path in sorted(boxes_b.glob("*.txt")):
            if box_path.stem not in bleeding_stems:
                raise ValueError(f"Box file {box_path} references nonexistent image {box_path.stem!r}")

    frames = ordered_map(lambda p: _load_bleeding(p, masks_b, boxes_b, stage_count), bleeding_paths)
    frames += ordered_map(lambda p: _load_nonbleeding(p, stage_count), nonbleeding_paths)
    logger.info(
        f"Loaded {len(frames)} frames from {root} "
        f"({len(bleeding_paths)} bleeding, {len(nonbleeding_paths)} non-bleeding)"
    )
    return frames


def split_dataset(
    frames: Sequence[AnnotatedFrame],
    val_fraction: float = 0.2,
    seed: int = DEFAULT_SEED,
) -> DatasetSplit:
    """
    Stratified train/val split, reproducible from (frame order, seed).

    Every class present must have at least 2 members; each contributes
    round(n * val_fraction) frames to validation, kept within [1, n - 1].
    Both subsets preserve input order.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    if len(frames) < 2:
        raise ValueError(f"Need at least 2 frames to split, got {len(frames)}")

    rng = substream("split", seed=seed)
    val_indices = set()
    for label in sorted({f.label for f in frames}):
        members = [i for i, f in enumerate(frames) if f.label == label]
        if len(members) < 2:
            raise ValueError(
                f"Class {label.tag} has {len(members)} member(s); a stratified split needs at least 2"
            )
        n_val = min(max(int(round(len(members) * val_fraction)), 1), len(members) - 1)
        chosen = rng.permutation(len(members))[:n_val]
        val_indices.update(members[k] for k in chosen)

    train = tuple(f for i, f in enumerate(frames) if i not in val_indices)
    val = tuple(frames[i] for i in sorted(val_indices))
    logger.info(f"Split {len(frames)} frames: {len(train)} train / {len(val)} val (seed {seed})")
    return DatasetSplit(train=train, val=val, seed=seed)
