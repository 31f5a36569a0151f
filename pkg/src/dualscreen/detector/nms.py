"""Greedy per-class non-maximum suppression."""

from __future__ import annotations

from ..metrics import iou
from ..types import Detection


def nms(detections: list[Detection], iou_threshold: float) -> list[Detection]:
    """Keep score-ordered detections whose IoU with every kept detection of
    the same class is at or below the threshold.

    Sorting is by descending score with ties kept in insertion order;
    detections of different classes never suppress each other.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: list[Detection] = []
    for i in order:
        det = detections[i]
        if all(
            k.object_class is not det.object_class or iou(det.bbox, k.bbox) <= iou_threshold
            for k in kept
        ):
            kept.append(det)
    return kept
