import json

import pytest

from src.evaluator import ClassificationScores, DetectionScores
from src.report_generator import REPORT_KEYS, MetricsReport, ReportGenerator

CLASSIFICATION = ClassificationScores(
    accuracy=0.123456789, precision=0.5, recall=1.0, f1=2 / 3,
    macro_precision=0.25, macro_recall=0.5, macro_f1=1 / 3,
)
DETECTION = DetectionScores(average_precision=0.9, map_50=0.8, map_50_95=0.3, average_iou=0.61)


def test_build_classification_only():
    report = MetricsReport.build(classification=CLASSIFICATION)
    assert report.accuracy == 0.123456789
    assert report.map50 is None and report.avg_iou is None


def test_build_detection_only():
    report = MetricsReport.build(detection=DETECTION)
    assert (report.ap, report.map50, report.map50_95, report.avg_iou) == (0.9, 0.8, 0.3, 0.61)
    assert report.accuracy is None


def test_written_json_has_every_key_at_full_precision(tmp_path):
    path = ReportGenerator(tmp_path).write(MetricsReport.build(classification=CLASSIFICATION))
    data = json.loads(path.read_text(encoding="utf-8"))
    assert sorted(data) == sorted(REPORT_KEYS)
    assert data["accuracy"] == 0.123456789
    assert data["ap"] is None


def test_write_is_reproducible(tmp_path):
    report = MetricsReport.build(CLASSIFICATION, DETECTION)
    a = ReportGenerator(tmp_path / "a").write(report)
    b = ReportGenerator(tmp_path / "b").write(report)
    assert a.read_bytes() == b.read_bytes()
    assert ReportGenerator.load(a) == report


def test_summary_rounds_for_display():
    df = ReportGenerator.summary(MetricsReport.build(classification=CLASSIFICATION))
    assert list(df["metric"]) == list(REPORT_KEYS[:7])
    assert df.loc[df["metric"] == "accuracy", "value"].item() == pytest.approx(0.1235)


def test_render():
    assert ReportGenerator.render(MetricsReport()) == "(no metrics)"
    text = ReportGenerator.render(MetricsReport.build(detection=DETECTION))
    assert "map50_95" in text and "0.3000" in text
    assert "accuracy" not in text
