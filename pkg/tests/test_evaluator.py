import numpy as np
import pytest

from src.evaluator import (
    COCO_THRESHOLDS, ImageRecord, average_iou, average_precision, classification_metrics, detection_metrics,
    map_50, map_range, match_detections,
)
from src.frames import BoundingBox, ClassLabel, Detection
from src.soft_nms import iou

B, N = ClassLabel.BLEEDING, ClassLabel.NON_BLEEDING


def _det(x0, y0, x1, y1, score, cls=0):
    return Detection(BoundingBox(x0, y0, x1, y1), score, cls)


def _greedy_oracle(dets, gts, thr):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    free = list(range(len(gts)))
    out = []
    for i in order:
        best, best_iou = None, -1.0
        for j in free:
            o = iou(dets[i].box, gts[j])
            if o > best_iou:
                best, best_iou = j, o
        if best is not None and best_iou >= thr:
            free.remove(best)
            out.append((i, best))
        else:
            out.append((i, None))
    return out


def _ap_oracle(records, thr):
    """Enumerate PR points; each hit adds 1/n_gt recall at the best precision reachable from it."""
    classes = sorted({c for r in records for c, _ in r.ground_truth})
    aps = []
    for cls in classes:
        rows = []
        n_gt = 0
        for order, rec in enumerate(records):
            dets = [d for d in rec.detections if d.class_id == cls]
            gts = [b for c, b in rec.ground_truth if c == cls]
            n_gt += len(gts)
            for i, j in _greedy_oracle(dets, gts, thr):
                rows.append((-dets[i].score, order, i, j is not None))
        rows.sort(key=lambda r: r[:3])
        precisions = []
        tp = 0
        for k, row in enumerate(rows, start=1):
            tp += row[3]
            precisions.append(tp / k)
        ap = 0.0
        for k, row in enumerate(rows):
            if row[3]:
                ap += max(precisions[k:]) / n_gt
        aps.append(ap)
    return sum(aps) / len(aps)


def _random_corpus(rng):
    records = []
    for index in range(int(rng.integers(1, 6))):
        gts = []
        for _ in range(int(rng.integers(1 if index == 0 else 0, 5))):
            x, y = rng.integers(0, 8, size=2)
            w, h = rng.integers(2, 6, size=2)
            gts.append((int(rng.integers(0, 2)), BoundingBox(float(x), float(y), float(x + w), float(y + h))))
        dets = []
        for _ in range(int(rng.integers(0, 7))):
            if gts and rng.random() < 0.6:
                cls, gt = gts[int(rng.integers(0, len(gts)))]
                jitter = rng.uniform(-1.0, 1.0, size=4)
                x0, y0 = max(0.0, gt.x_min + jitter[0]), max(0.0, gt.y_min + jitter[1])
                box = BoundingBox(x0, y0, max(x0 + 0.5, gt.x_max + jitter[2]), max(y0 + 0.5, gt.y_max + jitter[3]))
            else:
                cls = int(rng.integers(0, 2))
                x, y = rng.uniform(0, 8, size=2)
                box = BoundingBox(x, y, x + rng.uniform(1, 5), y + rng.uniform(1, 5))
            dets.append(Detection(box, float(rng.random()), cls))
        records.append(ImageRecord(f"img{index}", dets, gts))
    return records


class TestClassification:
    def test_perfect(self):
        scores = classification_metrics([B, N, B, N], [B, N, B, N])
        assert (scores.accuracy, scores.precision, scores.recall, scores.f1) == (1.0, 1.0, 1.0, 1.0)
        assert scores.macro_f1 == 1.0

    def test_all_missed(self):
        scores = classification_metrics([N, N, N], [B, B, B])
        assert (scores.accuracy, scores.precision, scores.recall, scores.f1) == (0.0, 0.0, 0.0, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="Length mismatch"):
            classification_metrics([B], [B, N])

    def test_counting_oracle(self, rng):
        for _ in range(50):
            preds = [ClassLabel(int(v)) for v in rng.integers(0, 2, 50)]
            truths = [ClassLabel(int(v)) for v in rng.integers(0, 2, 50)]
            tp = sum(p is B and t is B for p, t in zip(preds, truths))
            fp = sum(p is B and t is N for p, t in zip(preds, truths))
            fn = sum(p is N and t is B for p, t in zip(preds, truths))
            tn = 50 - tp - fp - fn
            s = classification_metrics(preds, truths)
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            assert s.accuracy == pytest.approx((tp + tn) / 50)
            assert s.precision == pytest.approx(precision)
            assert s.recall == pytest.approx(recall)
            if precision + recall:
                assert s.f1 == pytest.approx(2 * precision * recall / (precision + recall))
            # accuracy = (TPR * P + TNR * N) / (P + N)
            p_count, n_count = tp + fn, tn + fp
            tpr = tp / p_count if p_count else 0.0
            tnr = tn / n_count if n_count else 0.0
            assert s.accuracy == pytest.approx((tpr * p_count + tnr * n_count) / 50)
            assert s.macro_recall == pytest.approx((tpr + tnr) / 2)


class TestMatching:
    def test_exact_match(self):
        gt = BoundingBox(0, 0, 4, 4)
        assert match_detections([_det(0, 0, 4, 4, 0.9)], [gt]) == [(0, 0)]

    def test_single_use(self):
        gt = BoundingBox(0, 0, 4, 4)
        dets = [_det(0, 0, 4, 4, 0.5), _det(0, 0, 4, 4, 0.9)]
        assert match_detections(dets, [gt]) == [(1, 0), (0, None)]

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            match_detections([], [], iou_thr=1.0)

    def test_matches_oracle(self, rng):
        for _ in range(300):
            for rec in _random_corpus(rng):
                gts = [b for _, b in rec.ground_truth]
                thr = float(rng.choice(COCO_THRESHOLDS))
                assert match_detections(rec.detections, gts, thr) == _greedy_oracle(rec.detections, gts, thr)


class TestAveragePrecision:
    def test_perfect_detector(self):
        records = [
            ImageRecord("a", [_det(0, 0, 4, 4, 0.9)], [(0, BoundingBox(0, 0, 4, 4))]),
            ImageRecord("b", [_det(2, 2, 6, 6, 0.8, 1)], [(1, BoundingBox(2, 2, 6, 6))]),
        ]
        assert average_precision(records) == 1.0
        assert map_range(records) == 1.0
        assert average_precision(records, interpolation="coco101") == pytest.approx(1.0)
        assert average_iou(records) == 1.0

    def test_no_detections(self):
        records = [ImageRecord("a", [], [(0, BoundingBox(0, 0, 4, 4))])]
        assert average_precision(records) == 0.0
        assert average_iou(records) == 0.0

    def test_zero_ground_truth(self):
        with pytest.raises(ValueError, match="at least one ground-truth"):
            average_precision([ImageRecord("a", [_det(0, 0, 1, 1, 0.5)], [])])

    def test_duplicate_image_ids(self):
        gt = [(0, BoundingBox(0, 0, 4, 4))]
        with pytest.raises(ValueError, match="Duplicate image id"):
            average_precision([ImageRecord("a", [], gt), ImageRecord("a", [], gt)])

    def test_three_detections_two_gts(self):
        gts = [(0, BoundingBox(0, 0, 4, 4)), (0, BoundingBox(10, 10, 14, 14))]
        dets = [_det(0, 0, 4, 4, 0.9), _det(20, 20, 22, 22, 0.8), _det(10, 10, 14, 14, 0.7)]
        # PR points: (0.5, 1), (0.5, 0.5), (1, 2/3)
        assert average_precision([ImageRecord("a", dets, gts)]) == pytest.approx(0.5 + 0.5 * 2 / 3, abs=1e-12)

    def test_false_positive_first(self):
        records = [ImageRecord("a", [_det(5, 5, 6, 6, 0.9), _det(0, 0, 4, 4, 0.5)], [(0, BoundingBox(0, 0, 4, 4))])]
        assert average_precision(records) == pytest.approx(0.5)
        assert average_precision(records, interpolation="coco101") == pytest.approx(0.5)

    def test_uniform_iou_point_six(self):
        records = [ImageRecord("a", [_det(0, 0, 10, 6, 0.9)], [(0, BoundingBox(0, 0, 10, 10))])]
        assert map_50(records) == 1.0
        assert map_range(records) == pytest.approx(0.3)
        assert average_iou(records) == pytest.approx(0.6)

    def test_matches_enumeration_oracle(self, rng):
        for _ in range(500):
            records = _random_corpus(rng)
            for thr in (0.5, 0.75):
                assert average_precision(records, thr) == pytest.approx(_ap_oracle(records, thr), abs=1e-9)
            per_threshold = [_ap_oracle(records, t) for t in COCO_THRESHOLDS]
            assert map_range(records) == pytest.approx(np.mean(per_threshold), abs=1e-9)
            assert map_50(records) >= map_range(records) - 1e-12

    def test_monotone_in_threshold(self, rng):
        for _ in range(100):
            records = _random_corpus(rng)
            aps = [average_precision(records, t) for t in COCO_THRESHOLDS]
            assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))

    def test_average_iou_is_mean_over_matches(self, rng):
        for _ in range(100):
            records = _random_corpus(rng)
            overlaps = []
            for rec in records:
                for cls in {d.class_id for d in rec.detections} | {c for c, _ in rec.ground_truth}:
                    dets = [d for d in rec.detections if d.class_id == cls]
                    gts = [b for c, b in rec.ground_truth if c == cls]
                    overlaps += [iou(dets[i].box, gts[j]) for i, j in _greedy_oracle(dets, gts, 0.5) if j is not None]
            expected = float(np.mean(overlaps)) if overlaps else 0.0
            assert average_iou(records) == pytest.approx(expected, abs=1e-12)


def test_detection_metrics_bundle():
    records = [ImageRecord("a", [_det(0, 0, 10, 6, 0.9)], [(0, BoundingBox(0, 0, 10, 10))])]
    scores = detection_metrics(records)
    assert scores.average_precision == 1.0
    assert scores.map_50 == 1.0
    assert scores.map_50_95 == pytest.approx(0.3)
    assert scores.average_iou == pytest.approx(0.6)
    assert all(0.0 <= v <= 1.0 for v in scores.model_dump().values())
