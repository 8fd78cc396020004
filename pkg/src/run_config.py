"""Run configuration: one flat YAML mapping drives every command."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.backbones import Architecture, BackboneSpec
from src.losses import LossWeights
from src.seeding import DEFAULT_SEED
from src.soft_nms import SuppressionConfig
from src.trainer import TrainConfig

logger = logging.getLogger(__name__)

PATH_KEYS = ("dataset_root", "layout_path", "output_dir")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = DEFAULT_SEED
    dataset_root: Optional[Path] = None
    layout_path: Optional[Path] = None
    output_dir: Path = Path("runs/latest")

    backbones: str = "residual18_style,plainconv16_style"
    width_mult: float = Field(0.25, gt=0)
    activation: Literal["relu", "softplus"] = "relu"
    stage_count: Optional[int] = Field(None, ge=3, le=7)

    lambda_attn: float = Field(1.0, ge=0, allow_inf_nan=False)
    lambda_seg: float = Field(1.0, ge=0, allow_inf_nan=False)
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(16, ge=1)
    learning_rate: float = Field(1e-3, gt=0, allow_inf_nan=False)
    val_fraction: float = Field(0.2, gt=0, lt=1)
    deterministic: bool = True

    suppression_method: Literal["gaussian", "linear", "hard"] = "gaussian"
    sigma: float = Field(0.5, gt=0)
    overlap_threshold: float = Field(0.3, gt=0, lt=1)
    score_floor: float = Field(0.001, ge=0, lt=1)
    ap_interpolation: Literal["all_points", "coco101"] = "all_points"

    mask_threshold: float = Field(0.5, ge=0, le=1)
    min_box_area: int = Field(4, ge=1)
    overlay_alpha: float = Field(0.5, ge=0, le=1)
    logging_level: str = "INFO"

    @field_validator("backbones")
    @classmethod
    def _check_backbones(cls, value: str) -> str:
        names = [n.strip() for n in value.split(",") if n.strip()]
        if not names:
            raise ValueError("backbones must name at least one architecture")
        for name in names:
            Architecture(name)
        return ",".join(names)

    @field_validator("logging_level")
    @classmethod
    def _check_level(cls, value: str) -> str:
        value = value.upper()
        if value not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown logging level: {value}")
        return value

    def backbone_specs(self) -> List[BackboneSpec]:
        specs = []
        for name in self.backbones.split(","):
            arch = Architecture(name)
            stages = None if arch is Architecture.TINY else self.stage_count
            specs.append(
                BackboneSpec(arch=arch, width_mult=self.width_mult, stage_count=stages, activation=self.activation)
            )
        return specs

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            loss_weights=LossWeights(lambda_attn=self.lambda_attn, lambda_seg=self.lambda_seg),
            backbones=tuple(self.backbone_specs()),
            deterministic=self.deterministic,
        )

    def suppression_config(self) -> SuppressionConfig:
        return SuppressionConfig(
            method=self.suppression_method,
            sigma=self.sigma,
            overlap_threshold=self.overlap_threshold,
            score_floor=self.score_floor,
        )

    def validate_paths(self) -> None:
        """Input paths must exist before any work starts."""
        if self.dataset_root is None:
            raise ValueError("dataset_root is not set")
        if not self.dataset_root.is_dir():
            raise FileNotFoundError(f"Dataset root not found: {self.dataset_root}")
        if self.layout_path is not None and not self.layout_path.is_file():
            raise FileNotFoundError(f"Layout file not found: {self.layout_path}")


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load a flat YAML run config.

    Relative paths resolve against the config file's directory. `overrides`
    (e.g. CLI flags) win over file values; None entries are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Run config not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Run config {path} must be a flat key: value mapping")
    nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
    if nested:
        raise ValueError(f"Run config {path} must be flat; nested value(s) for {nested}")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    data.setdefault("output_dir", str(RunConfig.model_fields["output_dir"].default))
    base = path.resolve().parent
    for key in PATH_KEYS:
        if data.get(key) is not None:
            data[key] = (base / Path(str(data[key]))).resolve()
    config = RunConfig(**data)
    logger.debug(f"Loaded run config from {path}: {config.model_dump(mode='json')}")
    return config


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write the resolved config (absolute paths, sorted keys)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {k: v for k, v in config.model_dump(mode="json").items() if v is not None}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(data, f, sort_keys=True, default_flow_style=False)
    return path
