"""Three-path training objective."""

from typing import Optional, Sequence, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from src.frames import AnnotatedFrame, ClassLabel
from src.segmentation import seg_target

PROB_CLAMP = 1e-7


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_attn: float = Field(1.0, ge=0, allow_inf_nan=False)
    lambda_seg: float = Field(1.0, ge=0, allow_inf_nan=False)


def _check_finite(name: str, t: torch.Tensor) -> None:
    if not bool(torch.isfinite(t).all()):
        raise ValueError(f"combined_loss: non-finite values in {name}")


def _cross_entropy(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    p = probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -torch.log(p.gather(1, labels.view(-1, 1)).squeeze(1))


def _bce_mean(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = pred.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_pixel = -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p))
    return per_pixel.flatten(1).mean(dim=1)


def combined_loss(
    std_probs: torch.Tensor,
    attn_probs: Optional[torch.Tensor],
    pred_mask: torch.Tensor,
    labels: torch.Tensor,
    target_masks: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """
    Per-frame CE(std) + lambda_attn * CE(attn) + lambda_seg * BCE_mean(mask),
    averaged over the batch.

    Args:
        std_probs: B x 2 standard-path probabilities
        attn_probs: B x 2 attention-path probabilities (None drops the term)
        pred_mask: B x H x W predicted mask
        labels: B class indices (1 = bleeding)
        target_masks: B x H x W segmentation targets

    Returns:
        Scalar tensor >= 0
    """
    std_probs = std_probs.reshape(-1, 2)
    batch = std_probs.shape[0]
    pred_mask = pred_mask.reshape(batch, *pred_mask.shape[-2:])
    target_masks = target_masks.reshape(batch, *target_masks.shape[-2:]).to(pred_mask.dtype)
    labels = labels.reshape(-1).long()
    if labels.numel() != batch:
        raise ValueError(f"combined_loss: {labels.numel()} labels for a batch of {batch}")
    if pred_mask.shape != target_masks.shape:
        raise ValueError(f"combined_loss: mask shape {tuple(pred_mask.shape)} vs target {tuple(target_masks.shape)}")
    _check_finite("std_probs", std_probs)
    _check_finite("pred_mask", pred_mask)
    _check_finite("target_masks", target_masks)

    loss = _cross_entropy(std_probs, labels)
    if attn_probs is not None:
        attn_probs = attn_probs.reshape(-1, 2)
        _check_finite("attn_probs", attn_probs)
        loss = loss + weights.lambda_attn * _cross_entropy(attn_probs, labels)
    loss = loss + weights.lambda_seg * _bce_mean(pred_mask, target_masks)
    return loss.mean()


def frame_loss(
    std_probs: Union[torch.Tensor, Sequence[float]],
    attn_probs: Optional[Union[torch.Tensor, Sequence[float]]],
    pred_mask: Union[torch.Tensor, np.ndarray],
    frame: AnnotatedFrame,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """combined_loss for one frame, with label and target taken from the frame."""
    std = torch.as_tensor(std_probs, dtype=torch.float64)
    attn = None if attn_probs is None else torch.as_tensor(attn_probs, dtype=torch.float64)
    pred = torch.as_tensor(pred_mask, dtype=torch.float64)
    target = torch.as_tensor(seg_target(frame).values, dtype=torch.float64)
    label = torch.tensor([int(ClassLabel.parse(frame.label))])
    return combined_loss(std, attn, pred, label, target, weights)
