"""Encoder backbones producing multi-resolution feature-map stacks.

Stage s (1-based) of every encoder sits at spatial size (H / 2^s, W / 2^s)
and ends in a nonnegative activation (ReLU or Softplus).
"""

import enum
from typing import List, Literal, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.frames import ImageFrame

FeatureMapStack = List[torch.Tensor]


class Architecture(str, enum.Enum):
    RESIDUAL18 = "residual18_style"
    PLAINCONV16 = "plainconv16_style"
    TINY = "tiny_test"


DEFAULT_STAGES = {
    Architecture.RESIDUAL18: 4,
    Architecture.PLAINCONV16: 5,
    Architecture.TINY: 3,
}

_BASE_CHANNELS = (64, 128, 256, 512, 512, 512, 512)
_TINY_CHANNELS = (8, 16, 32)
# convolutions per stage of the plain (VGG-16-like) family
_PLAIN_CONVS = (2, 2, 3, 3, 3, 3, 3)


class BackboneSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    arch: Architecture = Architecture.TINY
    width_mult: float = Field(1.0, gt=0)
    stage_count: int = Field(3, ge=3, le=7)
    activation: Literal["relu", "softplus"] = "relu"

    @model_validator(mode="before")
    @classmethod
    def _default_stage_count(cls, data):
        if isinstance(data, dict) and data.get("stage_count") is None:
            data = dict(data)
            data["stage_count"] = DEFAULT_STAGES[Architecture(data.get("arch", Architecture.TINY))]
        return data

    @model_validator(mode="after")
    def _check_tiny(self):
        if self.arch is Architecture.TINY and self.stage_count != 3:
            raise ValueError("tiny_test backbones have exactly 3 stages")
        return self

    @property
    def downsample_factor(self) -> int:
        return 2 ** self.stage_count

    def stage_channels(self) -> List[int]:
        base = _TINY_CHANNELS if self.arch is Architecture.TINY else _BASE_CHANNELS
        return [max(4, int(round(c * self.width_mult))) for c in base[: self.stage_count]]


def make_activation(name: str) -> nn.Module:
    if name == "relu":
        return nn.ReLU()
    if name == "softplus":
        return nn.Softplus()
    raise ValueError(f"Unknown activation: {name}")


class TinyEncoder(nn.Module):
    """Two plain convolutions per stage, the first strided; no normalization."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        self.stage_channels = spec.stage_channels()
        stages = []
        in_c = 3
        for c in self.stage_channels:
            stages.append(nn.Sequential(
                nn.Conv2d(in_c, c, 3, stride=2, padding=1),
                make_activation(spec.activation),
                nn.Conv2d(c, c, 3, padding=1),
                make_activation(spec.activation),
            ))
            in_c = c
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> FeatureMapStack:
        stack = []
        for stage in self.stages:
            x = stage(x)
            stack.append(x)
        return stack


class BasicBlock(nn.Module):
    def __init__(self, in_c: int, out_c: int, stride: int, activation: str):
        super().__init__()
        self.conv1 = nn.Conv2d(in_c, out_c, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_c)
        self.conv2 = nn.Conv2d(out_c, out_c, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_c)
        self.act = make_activation(activation)
        self.shortcut: nn.Module = nn.Identity()
        if stride != 1 or in_c != out_c:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_c, out_c, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_c),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.act(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act(out + self.shortcut(x))


class ResidualEncoder(nn.Module):
    """ResNet-18-like: full-resolution stem, then two basic blocks per stage."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        self.stage_channels = spec.stage_channels()
        stem_c = self.stage_channels[0]
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_c, 3, padding=1, bias=False),
            nn.BatchNorm2d(stem_c),
            make_activation(spec.activation),
        )
        stages = []
        in_c = stem_c
        for c in self.stage_channels:
            stages.append(nn.Sequential(
                BasicBlock(in_c, c, 2, spec.activation),
                BasicBlock(c, c, 1, spec.activation),
            ))
            in_c = c
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> FeatureMapStack:
        x = self.stem(x)
        stack = []
        for stage in self.stages:
            x = stage(x)
            stack.append(x)
        return stack


class PlainConvEncoder(nn.Module):
    """VGG-16-like: conv-BN-activation groups, each stage closed by 2x2 max pooling."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        self.stage_channels = spec.stage_channels()
        stages = []
        in_c = 3
        for c, n_convs in zip(self.stage_channels, _PLAIN_CONVS):
            layers: List[nn.Module] = []
            for _ in range(n_convs):
                layers += [
                    nn.Conv2d(in_c, c, 3, padding=1, bias=False),
                    nn.BatchNorm2d(c),
                    make_activation(spec.activation),
                ]
                in_c = c
            layers.append(nn.MaxPool2d(2))
            stages.append(nn.Sequential(*layers))
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> FeatureMapStack:
        stack = []
        for stage in self.stages:
            x = stage(x)
            stack.append(x)
        return stack


_ENCODERS = {
    Architecture.TINY: TinyEncoder,
    Architecture.RESIDUAL18: ResidualEncoder,
    Architecture.PLAINCONV16: PlainConvEncoder,
}


def build_encoder(spec: BackboneSpec) -> nn.Module:
    return _ENCODERS[spec.arch](spec)


def frames_to_tensor(
    images: Sequence[Union[ImageFrame, np.ndarray]],
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Stack frames (H x W x 3) into a B x 3 x H x W tensor; all frames must share H x W."""
    if not images:
        raise ValueError("Empty image batch")
    arrays = [img.pixels if isinstance(img, ImageFrame) else np.asarray(img) for img in images]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"All images in a batch must share H x W, got {sorted(shapes)}")
    batch = np.stack(arrays).transpose(0, 3, 1, 2)
    return torch.as_tensor(np.ascontiguousarray(batch), dtype=dtype)


def check_input_size(x: torch.Tensor, stage_count: int) -> None:
    factor = 2 ** stage_count
    height, width = x.shape[-2:]
    if height % factor or width % factor:
        raise ValueError(f"Input size {height}x{width} is not divisible by 2^{stage_count}={factor}")


def encode(
    batch: Union[torch.Tensor, Sequence[ImageFrame]],
    encoder: nn.Module,
) -> FeatureMapStack:
    """
    Run an encoder on a batch.

    Args:
        batch: B x 3 x H x W tensor or a list of ImageFrame
        encoder: Module built by build_encoder

    Returns:
        Stage tensors; stage s has shape B x C_s x H/2^s x W/2^s
    """
    x = batch if isinstance(batch, torch.Tensor) else frames_to_tensor(batch, next(encoder.parameters()).dtype)
    check_input_size(x, encoder.spec.stage_count)
    return encoder(x)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
