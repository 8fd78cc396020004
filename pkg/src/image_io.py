"""PNG/JPEG reading and writing for frames and masks."""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def read_rgb(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit image as H x W x 3 float32 in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (UnidentifiedImageError, OSError) as e:
        raise ValueError(f"Unreadable image {path}: {e}") from e
    return arr / 255.0


def read_mask(path: Union[str, Path], threshold: float = 0.5) -> np.ndarray:
    """Read a single-channel mask and binarize it with `value > threshold` (of full scale)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise ValueError(f"Unreadable mask {path}: {e}") from e
    return (arr > threshold).astype(np.float32)


def write_rgb(pixels: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")
    return path


def write_mask(values: np.ndarray, path: Union[str, Path]) -> Path:
    """Persist a mask as single-channel PNG (values x 255, rounded)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")
    return path


def list_images(directory: Union[str, Path]):
    """Image files directly under `directory`, in sorted-path order."""
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
