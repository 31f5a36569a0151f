"""Unit tests for detection/classification metrics, including a brute-force
matching oracle and a discrete sub-pixel grid IoU cross-check."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualscreen.metrics import (
    DEFAULT_THETA_SET,
    EvalConfig,
    accumulate,
    average_precision,
    classification_report,
    evaluate_detections,
    iou,
    match_detections,
    mean_average_precision,
)
from dualscreen.metrics_oracle import oracle_ap, oracle_evaluate, oracle_match
from dualscreen.types import (
    Annotation,
    AnomalyLabel,
    BoundingBox,
    Detection,
    ObjectClass,
)
from conftest import make_record

A = AnomalyLabel.ANOMALOUS
B = AnomalyLabel.BENIGN


def ann(x0, y0, x1, y1, cls=ObjectClass.BOTTLE, anomaly=B):
    return Annotation(bbox=BoundingBox(x0, y0, x1, y1), object_class=cls, anomaly=anomaly)


def det(x0, y0, x1, y1, score, cls=ObjectClass.BOTTLE):
    return Detection(bbox=BoundingBox(x0, y0, x1, y1), object_class=cls, score=score)


# ---------------------------------------------------------------- IoU


class TestIoU:
    def test_identical_boxes(self):
        b = BoundingBox(0, 0, 10, 10)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0

    def test_half_overlap_third(self):
        # intersection 50, union 150
        v = iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10))
        assert abs(v - 1.0 / 3.0) < 1e-15

    def test_touching_edges_zero(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 20, 10)) == 0.0

    def test_grid_enumeration_oracle(self):
        """Cross-check analytic IoU against counting sub-pixel cells on a fine
        grid, for boxes aligned to that grid (exact for aligned boxes)."""
        rng = random.Random(7)
        res = 8  # cells per unit
        for _ in range(50):
            def rand_box():
                x0 = rng.randrange(0, 40) / res
                y0 = rng.randrange(0, 40) / res
                x1 = x0 + rng.randrange(1, 40) / res
                y1 = y0 + rng.randrange(1, 40) / res
                return BoundingBox(x0, y0, x1, y1)

            b1, b2 = rand_box(), rand_box()
            xs = np.arange(0, 81) / res
            ys = np.arange(0, 81) / res
            cx = (xs[:-1] + xs[1:]) / 2
            cy = (ys[:-1] + ys[1:]) / 2
            gx, gy = np.meshgrid(cx, cy)

            def inside(b):
                return (gx > b.x_min) & (gx < b.x_max) & (gy > b.y_min) & (gy < b.y_max)

            m1, m2 = inside(b1), inside(b2)
            inter = np.count_nonzero(m1 & m2)
            union = np.count_nonzero(m1 | m2)
            expected = inter / union if union else 0.0
            assert abs(iou(b1, b2) - expected) < 1e-12

    @given(
        st.tuples(*[st.floats(0, 50) for _ in range(4)]),
        st.tuples(*[st.floats(0, 50) for _ in range(4)]),
        st.floats(0, 20),
        st.floats(0, 20),
    )
    @settings(max_examples=300, deadline=None)
    def test_symmetry_bounds_translation(self, raw1, raw2, dx, dy):
        def to_box(raw, dx=0.0, dy=0.0):
            x0, y0, w, h = raw
            return BoundingBox(x0 + dx, y0 + dy, x0 + dx + w + 1.0, y0 + dy + h + 1.0)

        b1, b2 = to_box(raw1), to_box(raw2)
        v = iou(b1, b2)
        assert 0.0 <= v <= 1.0
        assert v == iou(b2, b1)
        assert abs(iou(to_box(raw1, dx, dy), to_box(raw2, dx, dy)) - v) < 1e-9


# ---------------------------------------------------------------- matching


class TestMatching:
    def test_perfect_match(self):
        gts = [ann(0, 0, 10, 10)]
        dets = [det(0, 0, 10, 10, 0.9)]
        assert match_detections(dets, gts, 0.5) == [1]

    def test_duplicate_is_fp(self):
        gts = [ann(0, 0, 10, 10)]
        dets = [det(0, 0, 10, 10, 0.9), det(0.5, 0.5, 10, 10, 0.8)]
        assert match_detections(dets, gts, 0.5) == [1, 0]

    def test_empty_ground_truth(self):
        dets = [det(0, 0, 5, 5, s) for s in (0.9, 0.8, 0.7)]
        assert match_detections(dets, [], 0.5) == [0, 0, 0]

    def test_consumption_only_on_match(self):
        # first detection overlaps the GT but below theta: box stays available
        gts = [ann(0, 0, 10, 10)]
        dets = [det(0, 0, 10, 4, 0.9), det(0, 0, 10, 10, 0.8)]
        assert match_detections(dets, gts, 0.5) == [0, 1]

    def test_matches_exhaustive_oracle_randomised(self):
        rng = random.Random(123)
        for _ in range(300):
            n_gt = rng.randrange(0, 4)
            n_det = rng.randrange(0, 5)
            gts = []
            for _ in range(n_gt):
                x0, y0 = rng.uniform(0, 20), rng.uniform(0, 20)
                gts.append(ann(x0, y0, x0 + rng.uniform(2, 12), y0 + rng.uniform(2, 12)))
            dets = []
            for k in range(n_det):
                x0, y0 = rng.uniform(0, 20), rng.uniform(0, 20)
                dets.append(
                    det(x0, y0, x0 + rng.uniform(2, 12), y0 + rng.uniform(2, 12), 1.0 - k * 0.01)
                )
            theta = rng.choice(DEFAULT_THETA_SET)
            assert match_detections(dets, gts, theta) == oracle_match(dets, gts, theta)


# ---------------------------------------------------------------- PR curve / AP


class TestAccumulate:
    def test_single_tp(self):
        c = accumulate([1], 1)
        assert (c.t, c.f, c.p, c.r) == ([1], [0], [1.0], [1.0])

    def test_recurrence_example(self):
        c = accumulate([1, 0, 1], 2)
        assert c.t == [1, 1, 2]
        assert c.f == [0, 1, 1]
        assert c.p == [1.0, 0.5, 2.0 / 3.0]
        assert c.r == [0.5, 0.5, 1.0]

    def test_all_fp(self):
        c = accumulate([0, 0], 3)
        assert c.p == [0.0, 0.0]
        assert c.r == [0.0, 0.0]

    def test_degenerate_no_positives(self):
        c = accumulate([0, 1], 0)
        assert c.degenerate
        assert average_precision(c).ap == 0.0

    @given(st.lists(st.integers(0, 1), max_size=30), st.integers(1, 30))
    @settings(max_examples=300, deadline=None)
    def test_counts_and_monotone_recall(self, b, n_p):
        c = accumulate(b, n_p)
        for i, (t, f) in enumerate(zip(c.t, c.f), start=1):
            assert t + f == i
        assert all(r1 <= r2 for r1, r2 in zip(c.r, c.r[1:]))


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision(accumulate([1], 1)).ap == 1.0

    def test_mixed_example(self):
        ap = average_precision(accumulate([1, 0, 1], 2)).ap
        assert abs(ap - 5.0 / 6.0) < 1e-15

    def test_zero_recall(self):
        assert average_precision(accumulate([0, 0, 0], 4)).ap == 0.0

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=20), st.integers(1, 20))
    @settings(max_examples=300, deadline=None)
    def test_properties(self, b, n_p):
        n_p = max(n_p, sum(b))
        base = average_precision(accumulate(b, n_p)).ap
        assert 0.0 <= base <= 1.0 + 1e-12
        assert base == oracle_ap(b, n_p)
        # a fresh TP at the top never hurts; a trailing FP never helps
        better = average_precision(accumulate([1] + b, n_p + 1)).ap
        worse = average_precision(accumulate(b + [0], n_p)).ap
        assert better >= base - 1e-12
        assert worse <= base + 1e-12


def test_mean_average_precision():
    assert mean_average_precision([0.8, 0.6]) == 0.7
    assert mean_average_precision([0.4] * 6) == pytest.approx(0.4, abs=1e-15)
    assert mean_average_precision([]) == 0.0


# ---------------------------------------------------------------- full evaluation


def _random_instance(rng):
    """A small multi-image dataset plus detections, for oracle comparison."""
    classes = [ObjectClass.BOTTLE, ObjectClass.IRON, ObjectClass.LAPTOP]
    records = []
    dets_by_image = {}
    for i in range(rng.randrange(1, 4)):
        rec_id = f"im{i}"
        boxes, cls_list = [], []
        for _ in range(rng.randrange(0, 4)):
            x0, y0 = rng.uniform(0, 30), rng.uniform(0, 30)
            boxes.append((x0, y0, x0 + rng.uniform(2, 15), y0 + rng.uniform(2, 15)))
            cls_list.append(rng.choice(classes))
        records.append(make_record(rec_id, width=60, height=60, boxes=boxes, classes=cls_list))
        dets = []
        for _ in range(rng.randrange(0, 5)):
            x0, y0 = rng.uniform(0, 30), rng.uniform(0, 30)
            dets.append(
                det(x0, y0, x0 + rng.uniform(2, 15), y0 + rng.uniform(2, 15),
                    rng.random(), rng.choice(classes))
            )
        dets_by_image[rec_id] = dets
    return dets_by_image, records


class TestEvaluateDetections:
    def test_echoed_ground_truth_scores_perfectly(self, tiny_scenes):
        dets = {
            rec.id: [
                Detection(bbox=a.bbox, object_class=a.object_class, score=1.0)
                for a in rec.annotations
            ]
            for rec in tiny_scenes
        }
        report = evaluate_detections(dets, tiny_scenes)
        assert report.map == 1.0
        assert report.map50 == 1.0
        for cls in ObjectClass:
            if cls not in report.excluded_classes:
                assert report.per_class_ap[cls] == 1.0

    def test_no_detections(self, tiny_scenes):
        report = evaluate_detections({}, tiny_scenes)
        assert report.map == 0.0

    def test_unknown_image_id(self, tiny_scenes):
        with pytest.raises(ValueError, match="unknown image id"):
            evaluate_detections({"nope": []}, tiny_scenes)

    def test_empty_classes_excluded_from_mean(self):
        rec = make_record("x", boxes=[(0, 0, 10, 10)], classes=[ObjectClass.BOTTLE])
        report = evaluate_detections(
            {"x": [det(0, 0, 10, 10, 1.0)]}, [rec]
        )
        assert len(report.excluded_classes) == 5
        assert report.map == 1.0

    def test_matches_brute_force_oracle(self):
        rng = random.Random(99)
        for _ in range(1000):
            dets_by_image, records = _random_instance(rng)
            got = evaluate_detections(dets_by_image, records)
            want = oracle_evaluate(dets_by_image, records)
            assert got.map == want["map"]
            assert got.map50 == want["map50"]
            assert got.per_class_ap == want["per_class_ap"]
            assert got.per_class_ap50 == want["per_class_ap50"]
            assert got.excluded_classes == want["excluded_classes"]

    def test_invariance_under_id_relabelling(self):
        rng = random.Random(5)
        dets_by_image, records = _random_instance(rng)
        base = evaluate_detections(dets_by_image, records)
        renamed = {f"renamed_{k}": v for k, v in dets_by_image.items()}
        recs2 = [
            make_record(
                f"renamed_{r.id}", width=r.width, height=r.height,
                boxes=[tuple(a.bbox.as_array()) for a in r.annotations],
                classes=[a.object_class for a in r.annotations],
            )
            for r in records
        ]
        again = evaluate_detections(renamed, recs2)
        assert again.map == base.map
        assert again.per_class_ap == base.per_class_ap

    def test_invariance_under_horizontal_flip(self):
        rng = random.Random(6)
        dets_by_image, records = _random_instance(rng)
        base = evaluate_detections(dets_by_image, records)
        W = 60.0

        def flip_box(b):
            return (W - b.x_max, b.y_min, W - b.x_min, b.y_max)

        flipped_recs = [
            make_record(
                r.id, width=r.width, height=r.height,
                boxes=[flip_box(a.bbox) for a in r.annotations],
                classes=[a.object_class for a in r.annotations],
            )
            for r in records
        ]
        flipped_dets = {
            k: [Detection(bbox=BoundingBox(*flip_box(d.bbox)), object_class=d.object_class,
                          score=d.score) for d in v]
            for k, v in dets_by_image.items()
        }
        again = evaluate_detections(flipped_dets, flipped_recs)
        assert again.map == base.map
        assert again.per_class_ap == base.per_class_ap


class TestEvalConfig:
    def test_default_theta_sweep(self):
        assert DEFAULT_THETA_SET == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)

    def test_rejects_bad_sets(self):
        with pytest.raises(ValueError):
            EvalConfig(theta_set=())
        with pytest.raises(ValueError):
            EvalConfig(theta_set=(0.5, 0.5))
        with pytest.raises(ValueError):
            EvalConfig(theta_set=(0.0, 0.5))


# ---------------------------------------------------------------- classification


class TestClassificationReport:
    def test_all_correct(self):
        r = classification_report([A, B, A], [A, B, A])
        assert (r.accuracy, r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0, 1.0)
        assert r.fp_pct == 0.0
        assert r.tp_pct == 100.0

    def test_confusion_arithmetic(self):
        # TP=3, FP=1, FN=2, TN=4
        pred = [A] * 3 + [A] + [B] * 2 + [B] * 4
        truth = [A] * 3 + [B] + [A] * 2 + [B] * 4
        r = classification_report(pred, truth)
        assert (r.tp, r.fp, r.fn, r.tn) == (3, 1, 2, 4)
        assert r.accuracy == 0.7
        assert r.precision == 0.75
        assert r.recall == 0.6
        assert abs(r.f1 - 2 * 0.75 * 0.6 / 1.35) < 1e-12
        assert r.tp_pct == 60.0
        assert r.fp_pct == 20.0

    def test_undefined_ratios_are_none(self):
        r = classification_report([B, B], [B, B])
        assert r.precision is None
        assert r.recall is None
        assert r.tp_pct is None
        assert r.fp_pct == 0.0

    def test_empty_or_mismatched_raises(self):
        with pytest.raises(ValueError):
            classification_report([], [])
        with pytest.raises(ValueError):
            classification_report([A], [A, B])

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
    @settings(max_examples=300, deadline=None)
    def test_identities(self, pairs):
        pred = [A if p else B for p, _ in pairs]
        truth = [A if t else B for _, t in pairs]
        r = classification_report(pred, truth)
        assert r.tp + r.fp + r.fn + r.tn == len(pairs)
        if r.recall is not None:
            assert r.tp_pct == 100.0 * r.recall
        if r.precision is not None and r.recall is not None and r.precision + r.recall > 0:
            assert abs(r.f1 - 2 * r.precision * r.recall / (r.precision + r.recall)) < 1e-15
