"""Synthetic lesion generator for desk-scale runs.

Non-bleeding frames are a textured mucosa-like background. Bleeding frames
add 1-3 non-touching dark-red ellipses; the mask is the union of their
supports and each ground-truth box tightly bounds one ellipse.
"""

from typing import List, Optional, Tuple

import numpy as np

from src.frames import AnnotatedFrame, BoundingBox, ClassLabel, ImageFrame, MaskKind, SegmentationMask
from src.seeding import substream

BACKGROUND_RGB = np.array([0.78, 0.52, 0.40])
LESION_RGB = np.array([0.62, 0.06, 0.05])
MAX_PLACEMENT_TRIES = 50


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    texture = np.zeros((size, size))
    for _ in range(4):
        fy, fx = rng.uniform(1.0, 4.0, size=2)
        phase = rng.uniform(0.0, 2 * np.pi)
        texture += np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
    texture /= 4.0
    tint = rng.uniform(-0.05, 0.05, size=3)
    pixels = BACKGROUND_RGB + tint + 0.08 * texture[..., None]
    pixels += rng.normal(0.0, 0.015, size=(size, size, 3))
    return pixels


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float, angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    cos, sin = np.cos(angle), np.sin(angle)
    u = (dx * cos + dy * sin) / rx
    v = (-dx * sin + dy * cos) / ry
    return (u * u + v * v) <= 1.0


def _tight_box(support: np.ndarray) -> BoundingBox:
    rows = np.flatnonzero(support.any(axis=1))
    cols = np.flatnonzero(support.any(axis=0))
    return BoundingBox(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def _boxes_touch(a: BoundingBox, b: BoundingBox) -> bool:
    # one-pixel margin keeps supports out of each other's 8-neighbourhood
    return not (
        a.x_max + 1 <= b.x_min or b.x_max + 1 <= a.x_min
        or a.y_max + 1 <= b.y_min or b.y_max + 1 <= a.y_min
    )


def _place_lesions(rng: np.random.Generator, size: int) -> List[Tuple[np.ndarray, BoundingBox]]:
    r_lo = max(2, size // 12)
    r_hi = max(r_lo, size // 5)
    wanted = int(rng.integers(1, 4))
    lesions: List[Tuple[np.ndarray, BoundingBox]] = []
    for _ in range(MAX_PLACEMENT_TRIES):
        if len(lesions) == wanted:
            break
        ry, rx = rng.uniform(r_lo, r_hi, size=2)
        reach = max(ry, rx)
        lo, hi = reach + 1.0, size - reach - 2.0
        cy, cx = rng.uniform(lo, max(lo, hi), size=2)
        angle = rng.uniform(0.0, np.pi)
        support = _ellipse(size, cy, cx, ry, rx, angle)
        if not support.any():
            continue
        box = _tight_box(support)
        if any(_boxes_touch(box, other) for _, other in lesions):
            continue
        lesions.append((support, box))
    return lesions


def generate_synthetic_frame(
    seed: int,
    bleeding: bool,
    size: int = 64,
    stage_count: int = 3,
    frame_id: Optional[str] = None,
) -> AnnotatedFrame:
    """
    Generate one synthetic frame, fully determined by its arguments.

    Args:
        seed: Frame seed
        bleeding: Whether to draw lesions
        size: Side length in pixels; must be divisible by 2^stage_count
        stage_count: Encoder depth S
        frame_id: Optional id (defaults to synth_<seed>_<b|n>)

    Returns:
        AnnotatedFrame satisfying the label/mask invariants
    """
    factor = 2 ** stage_count
    if size < 8 or size % factor:
        raise ValueError(f"Synthetic frame size {size} must be >= 8 and divisible by 2^{stage_count}={factor}")
    rng = substream("synthetic", seed=seed)
    pixels = _background(rng, size)
    mask = np.zeros((size, size), dtype=np.float32)
    boxes: List[BoundingBox] = []

    if bleeding:
        lesions = _place_lesions(rng, size)
        if not lesions:
            raise RuntimeError(f"Could not place a lesion in a {size}x{size} frame (seed {seed})")
        for support, box in lesions:
            shade = rng.uniform(0.85, 1.1)
            color = LESION_RGB * shade + rng.normal(0.0, 0.02, size=(size, size, 3))
            pixels = np.where(support[..., None], color, pixels)
            mask[support] = 1.0
            boxes.append(box)

    frame_id = frame_id or f"synth_{seed}_{'b' if bleeding else 'n'}"
    image = ImageFrame(np.clip(pixels, 0.0, 1.0).astype(np.float32), frame_id)
    label = ClassLabel.BLEEDING if bleeding else ClassLabel.NON_BLEEDING
    return AnnotatedFrame(image, label, SegmentationMask(mask, MaskKind.GROUND_TRUTH), tuple(boxes))


def generate_synthetic_set(
    count: int,
    seed: int,
    size: int = 64,
    stage_count: int = 3,
) -> List[AnnotatedFrame]:
    """`count` frames, the first count // 2 bleeding; frame i uses seed derived from (seed, i)."""
    frames = []
    n_bleeding = count // 2
    for index in range(count):
        bleeding = index < n_bleeding
        frame_seed = int(substream(f"synthetic-set/{index}", seed=seed).integers(0, 2**31 - 1))
        prefix = "bleeding" if bleeding else "normal"
        frames.append(
            generate_synthetic_frame(frame_seed, bleeding, size, stage_count, frame_id=f"{prefix}_{index:04d}")
        )
    return frames
