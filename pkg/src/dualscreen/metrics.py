"""Detection and classification metrics.

Implements box IoU, score-ordered greedy matching over a sweep of IoU
thresholds, cumulative precision/recall curves, per-class AP, mAP, and the
two-class confusion metrics (A, P, R, F1, TP%, FP%). All arithmetic is
double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .types import (
    Annotation,
    AnomalyLabel,
    BoundingBox,
    Dataset,
    Detection,
    ObjectClass,
)

DEFAULT_THETA_SET = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))


@dataclass(frozen=True)
class EvalConfig:
    theta_set: tuple[float, ...] = DEFAULT_THETA_SET

    def __post_init__(self) -> None:
        if not self.theta_set:
            raise ValueError("theta_set must be non-empty")
        if any(not 0 < t <= 1 for t in self.theta_set):
            raise ValueError(f"thresholds must lie in (0, 1], got {self.theta_set}")
        if any(a >= b for a, b in zip(self.theta_set, self.theta_set[1:])):
            raise ValueError("theta_set must be strictly increasing")


def iou(b1: BoundingBox, b2: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(b1.x_max, b2.x_max) - max(b1.x_min, b2.x_min)
    iy = min(b1.y_max, b2.y_max) - max(b1.y_min, b2.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (b1.area + b2.area - inter)


def match_detections(
    detections: list[Detection],
    ground_truth: list[Annotation],
    theta: float,
) -> list[int]:
    """Greedy one-to-one matching in score order.

    Detections must already be sorted by descending score (ties by
    insertion order). Each detection takes the unmatched ground-truth box
    of highest IoU (ties by lowest annotation index); it is a true positive
    iff that IoU >= theta, and only then is the box consumed.
    """
    used = [False] * len(ground_truth)
    b: list[int] = []
    for det in detections:
        best_iou = 0.0
        best_idx = -1
        for g, ann in enumerate(ground_truth):
            if used[g]:
                continue
            v = iou(det.bbox, ann.bbox)
            if v > best_iou:
                best_iou = v
                best_idx = g
        if best_idx >= 0 and best_iou >= theta:
            used[best_idx] = True
            b.append(1)
        else:
            b.append(0)
    return b


@dataclass
class PRCurve:
    b: list[int]
    t: list[int]
    f: list[int]
    p: list[float]
    r: list[float]
    n_p: int
    degenerate: bool = False


def accumulate(b: list[int], n_p: int) -> PRCurve:
    """Cumulative TP/FP counts and the precision/recall sequences.

    t_i = t_{i-1} + b_i, f_i = f_{i-1} + (1 - b_i), p_i = t_i / (t_i + f_i),
    r_i = t_i / n_p. A curve with n_p = 0 is flagged degenerate (AP 0).
    """
    if n_p < 0:
        raise ValueError("n_p must be non-negative")
    t: list[int] = []
    f: list[int] = []
    p: list[float] = []
    r: list[float] = []
    ct = cf = 0
    for bi in b:
        ct += bi
        cf += 1 - bi
        t.append(ct)
        f.append(cf)
        p.append(ct / (ct + cf))
        r.append(ct / n_p if n_p > 0 else 0.0)
    return PRCurve(b=list(b), t=t, f=f, p=p, r=r, n_p=n_p, degenerate=(n_p == 0))


@dataclass(frozen=True)
class APResult:
    ap: float
    n_d: int
    theta: float


def average_precision(curve: PRCurve, theta: float = 0.0) -> APResult:
    """Area under the precision-recall sequence: sum of p_i * (r_i - r_{i-1})."""
    if curve.degenerate:
        return APResult(ap=0.0, n_d=len(curve.b), theta=theta)
    ap = 0.0
    prev_r = 0.0
    for pi, ri in zip(curve.p, curve.r):
        ap += pi * (ri - prev_r)
        prev_r = ri
    return APResult(ap=ap, n_d=len(curve.b), theta=theta)


def mean_average_precision(per_class_aps: list[float]) -> float:
    """Arithmetic mean of per-class AP values."""
    if not per_class_aps:
        return 0.0
    return sum(per_class_aps) / len(per_class_aps)


@dataclass
class DetectionReport:
    per_class_ap: dict[ObjectClass, float]
    per_class_ap50: dict[ObjectClass, float]
    map: float
    map50: float
    n_gt: dict[ObjectClass, int]
    n_det: dict[ObjectClass, int]
    excluded_classes: list[ObjectClass] = field(default_factory=list)
    theta_set: tuple[float, ...] = DEFAULT_THETA_SET

    def to_dict(self) -> dict:
        return {
            "per_class": {
                cls.label: {
                    "ap": self.per_class_ap[cls],
                    "ap50": self.per_class_ap50[cls],
                    "n_gt": self.n_gt[cls],
                    "n_det": self.n_det[cls],
                }
                for cls in self.per_class_ap
            },
            "map": self.map,
            "map50": self.map50,
            "excluded_classes": [c.label for c in self.excluded_classes],
            "theta_set": list(self.theta_set),
        }


def _class_ap_at_theta(
    pooled: list[tuple[str, Detection]],
    gts_by_image: dict[str, list[Annotation]],
    n_p: int,
    theta: float,
) -> float:
    """AP for one class at one threshold, matching each detection within its image."""
    used: dict[str, list[bool]] = {img: [False] * len(g) for img, g in gts_by_image.items()}
    b: list[int] = []
    for img_id, det in pooled:
        gts = gts_by_image.get(img_id, [])
        flags = used.get(img_id, [])
        best_iou = 0.0
        best_idx = -1
        for g, ann in enumerate(gts):
            if flags[g]:
                continue
            v = iou(det.bbox, ann.bbox)
            if v > best_iou:
                best_iou = v
                best_idx = g
        if best_idx >= 0 and best_iou >= theta:
            flags[best_idx] = True
            b.append(1)
        else:
            b.append(0)
    return average_precision(accumulate(b, n_p), theta).ap


def evaluate_detections(
    detections_by_image: dict[str, list[Detection]],
    dataset: Dataset,
    config: EvalConfig | None = None,
) -> DetectionReport:
    """Full detection evaluation: per class, per threshold, pooled across images.

    Detections are pooled per class and sorted by descending score (ties by
    image order then list order), matched only against their own image's
    ground truth. Per-class AP is the mean over the threshold sweep; classes
    with neither ground truth nor detections are excluded from the mAP mean.
    """
    config = config or EvalConfig()
    known_ids = {rec.id for rec in dataset}
    for img_id in detections_by_image:
        if img_id not in known_ids:
            raise ValueError(f"detections reference unknown image id {img_id!r}")

    per_class_ap: dict[ObjectClass, float] = {}
    per_class_ap50: dict[ObjectClass, float] = {}
    n_gt: dict[ObjectClass, int] = {}
    n_det: dict[ObjectClass, int] = {}
    excluded: list[ObjectClass] = []

    for cls in ObjectClass:
        gts_by_image = {
            rec.id: [a for a in rec.annotations if a.object_class is cls] for rec in dataset
        }
        pooled = [
            (rec.id, det)
            for rec in dataset
            for det in detections_by_image.get(rec.id, [])
            if det.object_class is cls
        ]
        pooled.sort(key=lambda item: -item[1].score)  # stable: ties keep pooling order

        total_gt = sum(len(g) for g in gts_by_image.values())
        n_gt[cls] = total_gt
        n_det[cls] = len(pooled)

        aps = [_class_ap_at_theta(pooled, gts_by_image, total_gt, t) for t in config.theta_set]
        per_class_ap[cls] = sum(aps) / len(aps)
        per_class_ap50[cls] = _class_ap_at_theta(pooled, gts_by_image, total_gt, 0.5)
        if total_gt == 0 and not pooled:
            excluded.append(cls)

    included = [c for c in ObjectClass if c not in excluded]
    if included:
        map_ = mean_average_precision([per_class_ap[c] for c in included])
        map50 = mean_average_precision([per_class_ap50[c] for c in included])
    else:
        map_ = map50 = 0.0

    return DetectionReport(
        per_class_ap=per_class_ap,
        per_class_ap50=per_class_ap50,
        map=map_,
        map50=map50,
        n_gt=n_gt,
        n_det=n_det,
        excluded_classes=excluded,
        theta_set=config.theta_set,
    )


@dataclass
class PipelineReport:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    tp_pct: float | None
    fp_pct: float | None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "A": self.accuracy,
            "P": self.precision,
            "R": self.recall,
            "F1": self.f1,
            "TP_pct": self.tp_pct,
            "FP_pct": self.fp_pct,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "degenerate": self.degenerate,
        }


def classification_report(
    predicted: list[AnomalyLabel],
    truth: list[AnomalyLabel],
) -> PipelineReport:
    """Two-class confusion metrics with `anomalous` as the positive class.

    Ratios with a zero denominator are reported as None rather than 0.
    """
    if not predicted or len(predicted) != len(truth):
        raise ValueError("predicted and truth must be equal-length non-empty sequences")
    tp = fp = fn = tn = 0
    for pred, gt in zip(predicted, truth):
        pos_pred = pred is AnomalyLabel.ANOMALOUS
        pos_gt = gt is AnomalyLabel.ANOMALOUS
        if pos_pred and pos_gt:
            tp += 1
        elif pos_pred:
            fp += 1
        elif pos_gt:
            fn += 1
        else:
            tn += 1

    def ratio(num: int, den: int) -> float | None:
        return num / den if den > 0 else None

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    elif precision is not None and recall is not None:
        f1 = 0.0
    return PipelineReport(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        accuracy=(tp + tn) / (tp + tn + fp + fn),
        precision=precision,
        recall=recall,
        f1=f1,
        tp_pct=None if recall is None else 100.0 * recall,
        fp_pct=100.0 * fp / (fp + tn) if (fp + tn) > 0 else None,
    )
