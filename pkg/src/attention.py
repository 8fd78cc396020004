"""Implicit attention branch (training only).

The final encoder stage is weighted by the ground-truth mask, block-averaged
down to feature resolution, and classified by the member's shared head.
Non-bleeding frames pass through unchanged (global attention).
"""

from typing import Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F

from src.ensemble import ClassificationHead, classify_head
from src.frames import ClassLabel, SegmentationMask

MaskLike = Union[SegmentationMask, np.ndarray, torch.Tensor]
LabelLike = Union[ClassLabel, int, Sequence[int], torch.Tensor]


def _mask_tensor(mask: MaskLike) -> torch.Tensor:
    if isinstance(mask, SegmentationMask):
        return torch.as_tensor(mask.values)
    if isinstance(mask, np.ndarray):
        return torch.as_tensor(mask)
    return mask


def downsample_mask(mask: MaskLike, h: int, w: int) -> torch.Tensor:
    """
    Non-overlapping block average of an H x W (or B x H x W) mask down to h x w.

    H and W must be integer multiples of h and w.
    """
    m = _mask_tensor(mask)
    if m.dim() not in (2, 3):
        raise ValueError(f"Mask must be H x W or B x H x W, got shape {tuple(m.shape)}")
    height, width = m.shape[-2:]
    if h <= 0 or w <= 0 or height % h or width % w:
        raise ValueError(f"Mask size {height}x{width} is not an integer multiple of {h}x{w}")
    squeeze = m.dim() == 2
    batched = m.reshape(-1, 1, height, width)
    if not batched.is_floating_point():
        batched = batched.float()
    pooled = F.avg_pool2d(batched, kernel_size=(height // h, width // w)).squeeze(1)
    return pooled[0] if squeeze else pooled


def _bleeding_flags(labels: LabelLike, batch: int, device) -> torch.Tensor:
    if isinstance(labels, torch.Tensor):
        flags = labels.reshape(-1)
    elif isinstance(labels, (int, ClassLabel)):
        flags = torch.tensor([int(labels)])
    else:
        flags = torch.tensor([int(v) for v in labels])
    if flags.numel() != batch:
        raise ValueError(f"Got {flags.numel()} labels for a batch of {batch}")
    return (flags == int(ClassLabel.BLEEDING)).to(device)


def apply_attention(features: torch.Tensor, lowres_mask: torch.Tensor, labels: LabelLike) -> torch.Tensor:
    """
    Weight features by the mask for bleeding frames; identity for non-bleeding.

    Args:
        features: C x h x w or B x C x h x w
        lowres_mask: h x w or B x h x w
        labels: One label or B labels

    Returns:
        Tensor shaped like `features`
    """
    single = features.dim() == 3
    feats = features.unsqueeze(0) if single else features
    mask = lowres_mask.unsqueeze(0) if lowres_mask.dim() == 2 else lowres_mask
    if feats.dim() != 4 or mask.dim() != 3:
        raise ValueError(f"Shape mismatch: features {tuple(features.shape)}, mask {tuple(lowres_mask.shape)}")
    if mask.shape[0] != feats.shape[0] or mask.shape[-2:] != feats.shape[-2:]:
        raise ValueError(f"Shape mismatch: features {tuple(features.shape)}, mask {tuple(lowres_mask.shape)}")
    bleeding = _bleeding_flags(labels, feats.shape[0], feats.device)
    weighted = feats * mask.to(feats.dtype).unsqueeze(1)
    out = torch.where(bleeding.view(-1, 1, 1, 1), weighted, feats)
    return out[0] if single else out


def attention_classify(weighted: torch.Tensor, head: ClassificationHead) -> torch.Tensor:
    """Classify attention-weighted features with the member's shared head."""
    return classify_head(weighted, head)
