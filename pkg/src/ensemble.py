"""Ensemble members (encoder + head + decoder) and probability-averaging inference.

Inference uses the standard classification path only: encoder -> head.
Neither the attention branch nor the decoder takes part in a decision.
"""

import hashlib
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from src.backbones import BackboneSpec, build_encoder, check_input_size, frames_to_tensor
from src.frames import ClassLabel, ImageFrame
from src.segmentation import DecoderSpec, UNetDecoder
from src.seeding import seeded_torch

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-6

ProbLike = Union[torch.Tensor, np.ndarray, Sequence[float]]


class MemberSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    backbone: BackboneSpec = Field(default_factory=BackboneSpec)
    decoder: DecoderSpec = Field(default_factory=DecoderSpec)


class ClassificationHead(nn.Module):
    """Global average pool followed by one affine map to 2 logits."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.fc = nn.Linear(in_channels, 2)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.fc(features.mean(dim=(-2, -1)))


def classify_head(final_stage: torch.Tensor, head: ClassificationHead) -> torch.Tensor:
    """ProbVector(s) from the last encoder stage: C x h x w -> (2,), or B x C x h x w -> B x 2."""
    return F.softmax(head(final_stage), dim=-1)


class EnsembleMember(nn.Module):
    def __init__(self, spec: MemberSpec):
        super().__init__()
        self.spec = spec
        self.encoder = build_encoder(spec.backbone)
        channels = self.encoder.stage_channels
        self.head = ClassificationHead(channels[-1])
        self.decoder: Optional[UNetDecoder] = UNetDecoder(channels, spec.decoder, spec.backbone.activation)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def classify(self, x: torch.Tensor) -> torch.Tensor:
        """Standard classification path: B x 3 x H x W -> B x 2 probabilities."""
        check_input_size(x, self.spec.backbone.stage_count)
        return classify_head(self.encoder(x)[-1], self.head)


def build_member(spec: MemberSpec, init_stream: str = "init/member0", seed: Optional[int] = None) -> EnsembleMember:
    """Construct a member with parameters drawn from the torch substream `init_stream`."""
    with seeded_torch(init_stream, seed):
        return EnsembleMember(spec)


def _as_prob_tensor(p: ProbLike) -> torch.Tensor:
    t = p if isinstance(p, torch.Tensor) else torch.as_tensor(np.asarray(p, dtype=np.float64))
    if t.shape[-1] != 2:
        raise ValueError(f"ProbVector must have 2 entries, got shape {tuple(t.shape)}")
    if bool((t < 0).any()) or bool(((t.sum(dim=-1) - 1.0).abs() > PROB_TOLERANCE).any()):
        raise ValueError(f"Not a probability vector: {t.tolist()}")
    return t


def ensemble_average(members: Sequence[ProbLike]) -> torch.Tensor:
    """Elementwise arithmetic mean of member ProbVectors."""
    if len(members) == 0:
        raise ValueError("ensemble_average needs at least one member")
    return torch.stack([_as_prob_tensor(p) for p in members]).mean(dim=0)


def label_from_probs(probs: torch.Tensor) -> ClassLabel:
    """Argmax with ties broken toward bleeding."""
    return ClassLabel.BLEEDING if float(probs[1]) >= float(probs[0]) else ClassLabel.NON_BLEEDING


def predict_batch(
    images: Union[torch.Tensor, Sequence[ImageFrame]],
    members: Sequence[EnsembleMember],
) -> Tuple[List[ClassLabel], torch.Tensor]:
    """Ensemble prediction for a batch: labels and B x 2 averaged probabilities."""
    if not members:
        raise ValueError("predict needs at least one model")
    member_probs = []
    with torch.no_grad():
        for member in members:
            member.eval()
            x = images if isinstance(images, torch.Tensor) else frames_to_tensor(images, member.dtype)
            member_probs.append(member.classify(x).double())
    probs = ensemble_average(member_probs)
    return [label_from_probs(p) for p in probs], probs


def predict(image: ImageFrame, members: Sequence[EnsembleMember]) -> Tuple[ClassLabel, torch.Tensor]:
    labels, probs = predict_batch([image], members)
    return labels[0], probs[0]


def parameter_digest(model: Union[nn.Module, dict]) -> str:
    """sha256 over names, shapes and raw bytes of a state dict, in order."""
    state = model.state_dict() if isinstance(model, nn.Module) else model
    h = hashlib.sha256()
    for name, value in state.items():
        arr = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
        arr = np.ascontiguousarray(arr)
        h.update(name.encode("utf-8"))
        h.update(str(arr.shape).encode("utf-8"))
        h.update(str(arr.dtype).encode("utf-8"))
        h.update(arr.tobytes())
    return h.hexdigest()
