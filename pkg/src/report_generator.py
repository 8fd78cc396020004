"""Report generator: collects classification and detection scores into one metrics report."""

from pathlib import Path
from typing import Optional, Union

import pandas as pd
from pydantic import BaseModel

from src.evaluator import ClassificationScores, DetectionScores
from src.utils.json_utils import read_json, write_json

REPORT_KEYS = (
    "accuracy", "precision", "recall", "f1",
    "macro_precision", "macro_recall", "macro_f1",
    "ap", "map50", "map50_95", "avg_iou",
)


class MetricsReport(BaseModel):
    """Fixed-key metrics report; a key is None when its family was not evaluated."""

    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    macro_precision: Optional[float] = None
    macro_recall: Optional[float] = None
    macro_f1: Optional[float] = None
    ap: Optional[float] = None
    map50: Optional[float] = None
    map50_95: Optional[float] = None
    avg_iou: Optional[float] = None

    @classmethod
    def build(
        cls,
        classification: Optional[ClassificationScores] = None,
        detection: Optional[DetectionScores] = None,
    ) -> "MetricsReport":
        fields = {}
        if classification is not None:
            fields.update(classification.model_dump())
        if detection is not None:
            fields.update(
                ap=detection.average_precision,
                map50=detection.map_50,
                map50_95=detection.map_50_95,
                avg_iou=detection.average_iou,
            )
        return cls(**fields)

    def as_row(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ReportGenerator:
    """Writes metrics reports and renders them as tables."""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write(self, report: MetricsReport, name: str = "metrics.json") -> Path:
        """Full-precision JSON with every key present (null when not evaluated)."""
        return write_json(report.model_dump(), self.output_dir / name)

    @staticmethod
    def load(path: Union[str, Path]) -> MetricsReport:
        return MetricsReport.model_validate(read_json(path))

    @staticmethod
    def summary(report: MetricsReport) -> pd.DataFrame:
        """One row per evaluated metric, rounded to 4 decimals for display."""
        row = report.as_row()
        df = pd.DataFrame({"metric": list(row), "value": list(row.values())})
        df["value"] = df["value"].astype(float).round(4)
        return df

    @classmethod
    def render(cls, report: MetricsReport) -> str:
        df = cls.summary(report)
        if df.empty:
            return "(no metrics)"
        return df.to_string(index=False, float_format=lambda v: f"{v:.4f}")
