"""Metrics logger: persists per-epoch training records and prediction tables to CSV."""

import logging
from pathlib import Path
from typing import List, Sequence, Union

import pandas as pd

from src.frames import ClassLabel
from src.trainer import EpochRecord

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["epoch", "mean_loss", "val_accuracy"]
PREDICTION_COLUMNS = ["id", "label", "p_bleeding"]


class MetricsLogger:
    """Writes training logs and prediction files under one output directory."""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.train_log_path = self.output_dir / "train_log.csv"

    def log_epochs(self, records: Sequence[EpochRecord]) -> Path:
        """Write the full epoch log (overwrites any previous file)."""
        df = pd.DataFrame(
            [[r.epoch, r.mean_loss, r.val_accuracy] for r in records], columns=TRAIN_LOG_COLUMNS
        )
        df.to_csv(self.train_log_path, index=False, float_format="%.10g")
        logger.info(f"Wrote {len(df)} epoch records to {self.train_log_path}")
        return self.train_log_path

    def load_epochs(self) -> List[EpochRecord]:
        if not self.train_log_path.exists():
            return []
        df = pd.read_csv(self.train_log_path)
        return [EpochRecord(int(r.epoch), float(r.mean_loss), float(r.val_accuracy)) for r in df.itertuples()]

    def log_predictions(
        self,
        ids: Sequence[str],
        labels: Sequence[ClassLabel],
        p_bleeding: Sequence[float],
        name: str = "predictions.csv",
    ) -> Path:
        if not (len(ids) == len(labels) == len(p_bleeding)):
            raise ValueError("ids, labels and p_bleeding must have equal length")
        df = pd.DataFrame(
            {"id": list(ids), "label": [ClassLabel(l).tag for l in labels], "p_bleeding": [float(p) for p in p_bleeding]},
            columns=PREDICTION_COLUMNS,
        )
        path = self.output_dir / name
        df.to_csv(path, index=False, float_format="%.10g")
        logger.info(f"Wrote {len(df)} predictions to {path}")
        return path


def read_label_table(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read an "id,label" CSV (extra columns ignored).

    Raises:
        FileNotFoundError, ValueError on missing columns, duplicate ids or unknown labels
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Label file not found: {path}")
    df = pd.read_csv(path, dtype={"id": str, "label": str})
    missing = {"id", "label"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
    dupes = df["id"][df["id"].duplicated()].tolist()
    if dupes:
        raise ValueError(f"{path}: duplicate id(s) {dupes[:5]}")
    df["label"] = [ClassLabel.parse(v) for v in df["label"]]
    return df[["id", "label"]]
