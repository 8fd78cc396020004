"""Training engine: joint optimization of the classification, attention and segmentation paths."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from src.attention import apply_attention, attention_classify, downsample_mask
from src.backbones import BackboneSpec, frames_to_tensor
from src.checkpoints import ModelState, member_state
from src.ensemble import EnsembleMember, MemberSpec, build_member, classify_head, predict_batch
from src.frames import AnnotatedFrame, ClassLabel, DatasetSplit
from src.losses import LossWeights, combined_loss
from src.segmentation import DecoderSpec, decode, dice, explain, seg_target
from src.seeding import DEFAULT_SEED, configure_determinism, set_seed, substream
from src.utils.timing import Stopwatch

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(10, ge=1)
    batch_size: int = Field(16, ge=1)
    learning_rate: float = Field(1e-3, gt=0, allow_inf_nan=False)
    seed: int = DEFAULT_SEED
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    backbones: Tuple[BackboneSpec, ...] = Field(
        default_factory=lambda: (BackboneSpec(arch="residual18_style"), BackboneSpec(arch="plainconv16_style")),
        min_length=1,
    )
    decoder: DecoderSpec = Field(default_factory=DecoderSpec)
    deterministic: bool = True
    dtype: str = "float32"

    @field_validator("dtype")
    @classmethod
    def _check_dtype(cls, value: str) -> str:
        if value not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {value}")
        return value

    @property
    def torch_dtype(self) -> torch.dtype:
        return getattr(torch, self.dtype)

    @property
    def stage_count(self) -> int:
        return max(spec.stage_count for spec in self.backbones)

    def member_specs(self) -> List[MemberSpec]:
        return [MemberSpec(backbone=b, decoder=self.decoder) for b in self.backbones]


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_accuracy: float


@dataclass
class SplitEvaluation:
    accuracy: float
    mean_dice: float
    labels: List[ClassLabel] = field(default_factory=list)
    probs: Optional[torch.Tensor] = None


@dataclass
class TrainingResult:
    members: List[EnsembleMember]
    checkpoints: List[ModelState]
    log: List[EpochRecord]


def frames_to_batch(
    frames: Sequence[AnnotatedFrame], dtype: torch.dtype = torch.float32
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Images (B x 3 x H x W), segmentation targets (B x H x W) and labels (B)."""
    images = frames_to_tensor([f.image for f in frames], dtype)
    masks = torch.as_tensor(np.stack([seg_target(f).values for f in frames]), dtype=dtype)
    labels = torch.tensor([int(f.label) for f in frames], dtype=torch.long)
    return images, masks, labels


def training_forward(
    member: EnsembleMember,
    images: torch.Tensor,
    masks: torch.Tensor,
    labels: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """All three paths of one member: (standard probs, attention probs, predicted mask)."""
    stack = member.encoder(images)
    final = stack[-1]
    std_probs = classify_head(final, member.head)
    lowres = downsample_mask(masks, final.shape[-2], final.shape[-1])
    weighted = apply_attention(final, lowres, labels)
    attn_probs = attention_classify(weighted, member.head)
    pred_mask = decode(stack, member.decoder)
    return std_probs, attn_probs, pred_mask


def evaluate_split(
    members: Sequence[EnsembleMember],
    frames: Sequence[AnnotatedFrame],
    batch_size: int = 32,
    with_dice: bool = True,
) -> SplitEvaluation:
    """Ensemble accuracy on `frames` and mean Dice of the explanation mask on bleeding frames."""
    if not frames:
        return SplitEvaluation(accuracy=float("nan"), mean_dice=float("nan"))
    labels: List[ClassLabel] = []
    probs = []
    dices = []
    for start in range(0, len(frames), batch_size):
        chunk = frames[start:start + batch_size]
        batch_labels, batch_probs = predict_batch([f.image for f in chunk], members)
        labels += batch_labels
        probs.append(batch_probs)
        bleeding = [f for f in chunk if f.label is ClassLabel.BLEEDING]
        if with_dice and bleeding:
            masks = explain([f.image for f in bleeding], members)
            dices += [dice(m.cpu().numpy(), f.mask) for m, f in zip(masks, bleeding)]
    correct = sum(int(p == f.label) for p, f in zip(labels, frames))
    mean_dice = float(np.mean(dices)) if dices else float("nan")
    return SplitEvaluation(correct / len(frames), mean_dice, labels, torch.cat(probs))


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    # a trailing singleton batch would break batch normalization
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(split: DatasetSplit, config: TrainConfig, progress: bool = True) -> TrainingResult:
    """
    Train every ensemble member on the same shuffled batch order.

    Shuffling per epoch comes from the substream "shuffle/epoch<k>" of config.seed;
    member i is initialized from "init/member<i>".

    Returns:
        TrainingResult with members, their checkpoint states and the per-epoch log
    """
    labels_present = {f.label for f in split.train}
    if len(labels_present) < 2:
        raise ValueError(
            f"Training set must contain both classes, got only {sorted(l.tag for l in labels_present)}"
        )
    configure_determinism(config.deterministic)
    set_seed(config.seed)

    dtype = config.torch_dtype
    images, masks, labels = frames_to_batch(split.train, dtype)
    members = [
        build_member(spec, f"init/member{i}", seed=config.seed).to(dtype)
        for i, spec in enumerate(config.member_specs())
    ]
    optimizers = [torch.optim.Adam(m.parameters(), lr=config.learning_rate) for m in members]
    logger.info(
        f"Training {len(members)} member(s) on {len(split.train)} frames "
        f"({len(split.val)} val) for {config.epochs} epochs"
    )

    log: List[EpochRecord] = []
    n = len(split.train)
    for epoch in tqdm(range(1, config.epochs + 1), desc="Training", unit="epoch", disable=not progress):
        order = substream(f"shuffle/epoch{epoch}", seed=config.seed).permutation(n)
        batches = _batches(order, config.batch_size)
        epoch_loss = 0.0
        with Stopwatch() as timer:
            for member, optimizer in zip(members, optimizers):
                member.train()
                member_loss = 0.0
                for idx in batches:
                    index = torch.as_tensor(idx)
                    std_probs, attn_probs, pred_mask = training_forward(
                        member, images[index], masks[index], labels[index]
                    )
                    loss = combined_loss(
                        std_probs, attn_probs, pred_mask, labels[index], masks[index], config.loss_weights
                    )
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    member_loss += float(loss.detach()) * len(idx)
                epoch_loss += member_loss / n
        mean_loss = epoch_loss / len(members)
        val = evaluate_split(members, split.val, with_dice=False)
        log.append(EpochRecord(epoch, mean_loss, val.accuracy))
        logger.info(
            f"epoch {epoch}: mean_loss={mean_loss:.6f} val_accuracy={val.accuracy:.4f} ({timer.elapsed_s:.1f}s)"
        )
        if not math.isfinite(mean_loss):
            raise FloatingPointError(f"Training diverged at epoch {epoch}: loss {mean_loss}")

    checkpoints = [
        member_state(m, {"seed": config.seed, "epoch": config.epochs, "member_index": i})
        for i, m in enumerate(members)
    ]
    for member in members:
        member.eval()
    return TrainingResult(members, checkpoints, log)
