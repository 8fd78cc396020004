"""U-Net-style segmentation branch, its training target, and interpretability outputs."""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field

from src.backbones import FeatureMapStack, check_input_size, frames_to_tensor, make_activation
from src.frames import AnnotatedFrame, ClassLabel, ImageFrame, MaskKind, SegmentationMask

logger = logging.getLogger(__name__)

DEFAULT_HIGHLIGHT = (0.0, 1.0, 0.0)


class DecoderSpec(BaseModel):
    """
    Decoder wiring. Up-stage k (k = 1..S) doubles resolution from stage S-k+1 to
    stage S-k and concatenates encoder stage S-k when it is listed in
    `skip_stages`; the last up-stage lands on full image resolution.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    skip_stages: Optional[Tuple[int, ...]] = None
    up_channels: Optional[Tuple[int, ...]] = Field(None, min_length=1)

    def resolve(self, stage_channels: Sequence[int]) -> "DecoderSpec":
        """Fill defaults (skip from every stage, mirror the encoder widths) and validate."""
        stage_count = len(stage_channels)
        skips = tuple(range(1, stage_count)) if self.skip_stages is None else tuple(sorted(set(self.skip_stages)))
        if any(s < 1 or s >= stage_count for s in skips):
            raise ValueError(f"skip_stages must be within 1..{stage_count - 1}, got {skips}")
        if self.up_channels is None:
            ups = tuple(stage_channels[stage_count - k - 1] for k in range(1, stage_count))
            ups += (max(4, stage_channels[0] // 2),)
        else:
            ups = tuple(self.up_channels)
        if len(ups) != stage_count:
            raise ValueError(f"Decoder needs {stage_count} up-stages, got {len(ups)} channel entries")
        if any(c < 1 for c in ups):
            raise ValueError(f"up_channels must be positive, got {ups}")
        return DecoderSpec(skip_stages=skips, up_channels=ups)


class UNetDecoder(nn.Module):
    def __init__(self, stage_channels: Sequence[int], spec: DecoderSpec, activation: str = "relu"):
        super().__init__()
        self.spec = spec.resolve(stage_channels)
        self.stage_count = len(stage_channels)
        ups, blocks = [], []
        in_c = stage_channels[-1]
        for k, out_c in enumerate(self.spec.up_channels, start=1):
            target = self.stage_count - k
            skip_c = stage_channels[target - 1] if target in self.spec.skip_stages else 0
            ups.append(nn.ConvTranspose2d(in_c, out_c, kernel_size=2, stride=2))
            blocks.append(nn.Sequential(
                nn.Conv2d(out_c + skip_c, out_c, 3, padding=1),
                make_activation(activation),
                nn.Conv2d(out_c, out_c, 3, padding=1),
                make_activation(activation),
            ))
            in_c = out_c
        self.ups = nn.ModuleList(ups)
        self.blocks = nn.ModuleList(blocks)
        self.final = nn.Conv2d(in_c, 1, kernel_size=1)

    def forward(self, stack: FeatureMapStack) -> torch.Tensor:
        if len(stack) != self.stage_count:
            raise ValueError(f"stage-count mismatch: decoder expects {self.stage_count} stages, got {len(stack)}")
        x = stack[-1]
        for k, (up, block) in enumerate(zip(self.ups, self.blocks), start=1):
            x = up(x)
            target = self.stage_count - k
            if target in self.spec.skip_stages:
                x = torch.cat([x, stack[target - 1]], dim=1)
            x = block(x)
        return torch.sigmoid(self.final(x)).squeeze(1)


def decode(stack: FeatureMapStack, decoder: UNetDecoder) -> torch.Tensor:
    """Predicted bleeding probability per pixel, B x H x W in [0, 1]."""
    return decoder(stack)


def seg_target(frame: AnnotatedFrame) -> SegmentationMask:
    """Ground-truth mask for bleeding frames, zero-filled mask otherwise."""
    if frame.label is ClassLabel.NON_BLEEDING:
        return SegmentationMask.zeros(frame.image.height, frame.image.width)
    if frame.mask is None:
        raise ValueError(f"Frame {frame.id}: missing mask for bleeding frame")
    return frame.mask


def explain(images: Union[torch.Tensor, Sequence[ImageFrame]], members: Sequence[nn.Module]) -> torch.Tensor:
    """
    Interpretability mask: pixelwise mean of every member's decoder output.

    Returns:
        B x H x W tensor in [0, 1]
    """
    if not members:
        raise ValueError("explain needs at least one ensemble member")
    masks = []
    with torch.no_grad():
        for member in members:
            if member.decoder is None:
                raise ValueError("Ensemble member has no segmentation decoder")
            member.eval()
            x = images if isinstance(images, torch.Tensor) else frames_to_tensor(images, member.dtype)
            check_input_size(x, member.encoder.spec.stage_count)
            masks.append(decode(member.encoder(x), member.decoder))
    return torch.stack(masks).mean(dim=0)


def overlay(
    image: ImageFrame,
    mask: Union[SegmentationMask, np.ndarray],
    alpha: float = 0.5,
    highlight: Tuple[float, float, float] = DEFAULT_HIGHLIGHT,
) -> ImageFrame:
    """Blend `highlight` into the image in proportion to alpha * mask."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    values = mask.values if isinstance(mask, SegmentationMask) else np.asarray(mask)
    if values.shape != (image.height, image.width):
        raise ValueError(f"Mask shape {values.shape} does not match image {(image.height, image.width)}")
    weight = (alpha * values)[..., None]
    blended = (1.0 - weight) * image.pixels + weight * np.asarray(highlight, dtype=np.float64)
    return ImageFrame(np.clip(blended, 0.0, 1.0).astype(image.pixels.dtype), image.id, image.original_shape)


def dice(pred: Union[SegmentationMask, np.ndarray], truth: Union[SegmentationMask, np.ndarray], threshold: float = 0.5) -> float:
    """Dice overlap of binarized masks; 1.0 when both are empty."""
    p = (pred.values if isinstance(pred, SegmentationMask) else np.asarray(pred)) > threshold
    t = (truth.values if isinstance(truth, SegmentationMask) else np.asarray(truth)) > threshold
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, t).sum()) / total


def as_predicted_mask(values: torch.Tensor) -> SegmentationMask:
    return SegmentationMask(values.detach().cpu().numpy().astype(np.float32), MaskKind.PREDICTED)
