"""Anchor grid generation, target assignment, and box encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..types import Annotation, BoundingBox

LABEL_NEGATIVE = -1
LABEL_IGNORE = -2


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple[float, float, float] = (12.0, 21.0, 34.0)
    aspect_ratios: tuple[float, float, float] = (0.5, 1.0, 2.0)  # height / width
    stride: int = 8

    def __post_init__(self) -> None:
        if len(self.scales) != 3 or len(self.aspect_ratios) != 3:
            raise ValueError("expect exactly 3 scales and 3 aspect ratios (9 anchors)")
        if any(s <= 0 for s in self.scales) or any(r <= 0 for r in self.aspect_ratios):
            raise ValueError("scales and aspect ratios must be positive")
        if self.stride <= 0:
            raise ValueError("stride must be positive")

    @property
    def num_anchors(self) -> int:
        return len(self.scales) * len(self.aspect_ratios)


def generate_anchors(feature_shape: tuple[int, int], config: AnchorConfig) -> np.ndarray:
    """All anchors for a feature map, shape (rows * cols * 9, 4).

    Ordering is row-major over locations, then scale-major over the 9
    shapes. The anchor for scale s and ratio r has width s/sqrt(r) and
    height s*sqrt(r), so all share area s^2. Anchors may extend beyond the
    image; they are clipped only at decode time.
    """
    rows, cols = feature_shape
    if rows < 1 or cols < 1:
        raise ValueError(f"feature shape must be at least 1x1, got {feature_shape}")
    shapes = []
    for s in config.scales:
        for r in config.aspect_ratios:
            w = s / np.sqrt(r)
            h = s * np.sqrt(r)
            shapes.append((w, h))
    shapes = np.asarray(shapes, dtype=np.float64)  # (9, 2)

    cx = (np.arange(cols) + 0.5) * config.stride
    cy = (np.arange(rows) + 0.5) * config.stride
    cxg, cyg = np.meshgrid(cx, cy)  # (rows, cols)
    centres = np.stack([cxg, cyg], axis=-1).reshape(-1, 1, 2)  # (rows*cols, 1, 2)
    half = shapes.reshape(1, -1, 2) / 2.0
    mins = centres - half
    maxs = centres + half
    return np.concatenate([mins, maxs], axis=-1).reshape(-1, 4)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU, shapes (N, 4) x (M, 4) -> (N, M)."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = boxes_a[:, None, :]
    b = boxes_b[None, :, :]
    ix = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    iy = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    return inter / (area_a + area_b - inter)


def encode_boxes(anchors: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Centre-offset / log-size deltas, vectorised over (N, 4) arrays."""
    aw = anchors[..., 2] - anchors[..., 0]
    ah = anchors[..., 3] - anchors[..., 1]
    acx = anchors[..., 0] + aw / 2
    acy = anchors[..., 1] + ah / 2
    gw = gts[..., 2] - gts[..., 0]
    gh = gts[..., 3] - gts[..., 1]
    gcx = gts[..., 0] + gw / 2
    gcy = gts[..., 1] + gh / 2
    return np.stack(
        [(gcx - acx) / aw, (gcy - acy) / ah, np.log(gw / aw), np.log(gh / ah)], axis=-1
    )


def decode_boxes(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Inverse of encode_boxes."""
    aw = anchors[..., 2] - anchors[..., 0]
    ah = anchors[..., 3] - anchors[..., 1]
    acx = anchors[..., 0] + aw / 2
    acy = anchors[..., 1] + ah / 2
    cx = acx + deltas[..., 0] * aw
    cy = acy + deltas[..., 1] * ah
    w = aw * np.exp(deltas[..., 2])
    h = ah * np.exp(deltas[..., 3])
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1)


def encode_box(anchor: BoundingBox, gt: BoundingBox) -> tuple[float, float, float, float]:
    return tuple(float(v) for v in encode_boxes(anchor.as_array(), gt.as_array()))


def decode_box(anchor: BoundingBox, deltas: tuple[float, float, float, float]) -> BoundingBox:
    out = decode_boxes(anchor.as_array(), np.asarray(deltas, dtype=np.float64))
    return BoundingBox(*out)


def assign_targets(
    anchors: np.ndarray,
    ground_truth: list[Annotation],
    iou_neg: float = 0.4,
    iou_pos: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Label every anchor and compute regression targets for positives.

    Returns (labels, reg_targets, matched_gt):
      labels: class code for positives, LABEL_NEGATIVE, or LABEL_IGNORE
      reg_targets: (N, 4) deltas, valid where labels >= 0
      matched_gt: index of the assigned ground-truth box, -1 elsewhere

    An anchor is positive when its best IoU >= iou_pos (argmax box, ties by
    lowest annotation index), negative below iou_neg, ignored in between.
    Additionally each ground-truth box forces its single best anchor
    positive so every object owns at least one anchor.
    """
    if not 0 <= iou_neg <= iou_pos <= 1:
        raise ValueError(f"require 0 <= iou_neg <= iou_pos <= 1, got {iou_neg}, {iou_pos}")
    n = len(anchors)
    labels = np.full(n, LABEL_NEGATIVE, dtype=np.int64)
    reg = np.zeros((n, 4), dtype=np.float64)
    matched = np.full(n, -1, dtype=np.int64)
    if not ground_truth:
        return labels, reg, matched

    gt_boxes = np.stack([a.bbox.as_array() for a in ground_truth])
    gt_classes = np.array([int(a.object_class) for a in ground_truth])
    ious = iou_matrix(anchors, gt_boxes)  # (N, G)

    best_gt = np.argmax(ious, axis=1)  # ties -> lowest annotation index
    best_iou = ious[np.arange(n), best_gt]

    labels[best_iou >= iou_pos] = gt_classes[best_gt[best_iou >= iou_pos]]
    matched[best_iou >= iou_pos] = best_gt[best_iou >= iou_pos]
    ignore = (best_iou >= iou_neg) & (best_iou < iou_pos)
    labels[ignore] = LABEL_IGNORE

    # best-anchor rule: each object keeps its highest-IoU anchor positive
    for g in range(len(ground_truth)):
        a_best = int(np.argmax(ious[:, g]))
        if matched[a_best] == -1 or ious[a_best, g] >= ious[a_best, matched[a_best]]:
            labels[a_best] = gt_classes[g]
            matched[a_best] = g

    pos = matched >= 0
    if pos.any():
        reg[pos] = encode_boxes(anchors[pos], gt_boxes[matched[pos]])
    return labels, reg, matched
