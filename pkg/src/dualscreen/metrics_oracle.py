"""Brute-force reference for the detection metrics.

Instead of running the greedy matcher, this enumerates every injective
partial assignment of detections to ground-truth boxes and filters for the
single assignment consistent with the matching protocol (score order, each
detection takes the unmatched box of highest IoU, consumed only on a match
at or above the threshold). The precision/recall recurrences and AP sum are
then replayed step by step. Intended for small instances only.
"""

from __future__ import annotations

from itertools import permutations

from .metrics import EvalConfig, iou
from .types import Annotation, Dataset, Detection, ObjectClass


def _all_partial_matchings(n_det: int, n_gt: int):
    """Yield every injective map det-index -> gt-index-or-None."""
    gt_indices = list(range(n_gt))
    # choose which detections are matched via permutations of padded slots
    padded = gt_indices + [None] * n_det
    seen = set()
    for perm in permutations(padded, n_det):
        if perm in seen:
            continue
        seen.add(perm)
        yield list(perm)


def _protocol_consistent(
    mapping: list[int | None],
    dets: list[Detection],
    gts: list[Annotation],
    theta: float,
) -> bool:
    used: set[int] = set()
    for i, det in enumerate(dets):
        best_iou = 0.0
        best_idx: int | None = None
        for g, ann in enumerate(gts):
            if g in used:
                continue
            v = iou(det.bbox, ann.bbox)
            if v > best_iou:
                best_iou = v
                best_idx = g
        if best_idx is not None and best_iou >= theta:
            if mapping[i] != best_idx:
                return False
            used.add(best_idx)
        else:
            if mapping[i] is not None:
                return False
    return True


def oracle_match(dets: list[Detection], gts: list[Annotation], theta: float) -> list[int]:
    """Match indicators found by exhaustive search over assignments."""
    if not dets:
        return []
    for mapping in _all_partial_matchings(len(dets), len(gts)):
        if _protocol_consistent(mapping, dets, gts, theta):
            return [0 if m is None else 1 for m in mapping]
    raise AssertionError("no protocol-consistent matching found")


def oracle_ap(b: list[int], n_p: int) -> float:
    """Replay the cumulative recurrences and the AP sum directly."""
    if n_p == 0:
        return 0.0
    t_prev = 0
    f_prev = 0
    r_prev = 0.0
    ap = 0.0
    for b_i in b:
        t_i = t_prev + b_i
        f_i = f_prev + (1 - b_i)
        p_i = t_i / (t_i + f_i)
        r_i = t_i / n_p
        ap += p_i * (r_i - r_prev)
        t_prev, f_prev, r_prev = t_i, f_i, r_i
    return ap


def oracle_evaluate(
    detections_by_image: dict[str, list[Detection]],
    dataset: Dataset,
    config: EvalConfig | None = None,
) -> dict:
    """Full detection evaluation replayed via exhaustive matching."""
    config = config or EvalConfig()
    per_class_ap: dict[ObjectClass, float] = {}
    per_class_ap50: dict[ObjectClass, float] = {}
    excluded: list[ObjectClass] = []

    for cls in ObjectClass:
        pooled: list[tuple[str, Detection]] = []
        for rec in dataset:
            for det in detections_by_image.get(rec.id, []):
                if det.object_class is cls:
                    pooled.append((rec.id, det))
        pooled.sort(key=lambda item: -item[1].score)

        gts_by_image = {
            rec.id: [a for a in rec.annotations if a.object_class is cls] for rec in dataset
        }
        n_p = sum(len(g) for g in gts_by_image.values())

        def ap_at(theta: float) -> float:
            # matching never crosses images, so solve each image separately
            b_by_image: dict[str, list[int]] = {}
            for img_id, gts in gts_by_image.items():
                dets = [d for i, d in pooled if i == img_id]
                b_by_image[img_id] = oracle_match(dets, gts, theta)
            cursor = {img_id: 0 for img_id in b_by_image}
            b: list[int] = []
            for img_id, _ in pooled:
                b.append(b_by_image[img_id][cursor[img_id]])
                cursor[img_id] += 1
            return oracle_ap(b, n_p)

        aps = [ap_at(t) for t in config.theta_set]
        per_class_ap[cls] = sum(aps) / len(aps)
        per_class_ap50[cls] = ap_at(0.5)
        if n_p == 0 and not pooled:
            excluded.append(cls)

    included = [c for c in ObjectClass if c not in excluded]
    if included:
        map_ = sum(per_class_ap[c] for c in included) / len(included)
        map50 = sum(per_class_ap50[c] for c in included) / len(included)
    else:
        map_ = map50 = 0.0
    return {
        "per_class_ap": per_class_ap,
        "per_class_ap50": per_class_ap50,
        "map": map_,
        "map50": map50,
        "excluded_classes": excluded,
    }
