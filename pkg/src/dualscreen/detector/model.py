"""Reference detector networks (single-stage and two-stage variants)."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..types import NUM_CLASSES
from .anchors import AnchorConfig

# softmax class layout: channel 0 = background, 1..6 = object classes
NUM_DET_CLASSES = NUM_CLASSES + 1
BACKGROUND = 0

SINGLE_STAGE_TAGS = ("reference", "retinanet")
TWO_STAGE_TAGS = ("faster_rcnn", "mask_rcnn")
ARCHITECTURE_TAGS = SINGLE_STAGE_TAGS + TWO_STAGE_TAGS


def _conv_block(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
        nn.GroupNorm(8, cout),
        nn.ReLU(inplace=True),
    )


class Trunk(nn.Module):
    """Shared stride-8 convolutional feature extractor."""

    stride = 8
    out_channels = 64

    def __init__(self) -> None:
        super().__init__()
        self.layers = nn.Sequential(
            _conv_block(3, 32),
            _conv_block(32, 32, stride=2),
            _conv_block(32, 64, stride=2),
            _conv_block(64, 64, stride=2),
            _conv_block(64, 64),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)


class SingleStageDetector(nn.Module):
    """Shared trunk with a focal-loss class head and a box-delta head.

    Heads emit per-location tensors for the 9 anchors; flattening order is
    (row, col, anchor), matching `generate_anchors`.
    """

    def __init__(self, anchor_config: AnchorConfig) -> None:
        super().__init__()
        self.anchor_config = anchor_config
        na = anchor_config.num_anchors
        self.trunk = Trunk()
        self.head = _conv_block(64, 64)
        self.cls_out = nn.Conv2d(64, na * NUM_DET_CLASSES, 1)
        self.box_out = nn.Conv2d(64, na * 4, 1)
        # bias the background channel so initial detections are sparse
        prior = 0.01
        bias = self.cls_out.bias.data.view(na, NUM_DET_CLASSES)
        bias.fill_(math.log(prior / (1 - prior)) / 2)
        bias[:, BACKGROUND] = -math.log(prior / (1 - prior)) / 2

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, tuple[int, int]]:
        """Returns (class_logits (B, A, K), box_deltas (B, A, 4), feature_shape)."""
        feat = self.head(self.trunk(x))
        b, _, fh, fw = feat.shape
        na = self.anchor_config.num_anchors
        logits = self.cls_out(feat).view(b, na, NUM_DET_CLASSES, fh, fw)
        logits = logits.permute(0, 3, 4, 1, 2).reshape(b, -1, NUM_DET_CLASSES)
        deltas = self.box_out(feat).view(b, na, 4, fh, fw)
        deltas = deltas.permute(0, 3, 4, 1, 2).reshape(b, -1, 4)
        return logits, deltas, (fh, fw)


class TwoStageDetector(nn.Module):
    """RPN over the trunk plus an ROI-Align second stage.

    The RPN reuses the anchor grid for binary objectness; top proposals are
    pooled to 7x7 and classified by a small fully connected head. The mask
    branch of the well-known architectures is intentionally absent: outputs
    are boxes only.
    """

    roi_size = 7

    def __init__(self, anchor_config: AnchorConfig) -> None:
        super().__init__()
        self.anchor_config = anchor_config
        na = anchor_config.num_anchors
        self.trunk = Trunk()
        self.rpn_head = _conv_block(64, 64)
        self.rpn_obj = nn.Conv2d(64, na * 2, 1)
        self.rpn_box = nn.Conv2d(64, na * 4, 1)
        feat_dim = Trunk.out_channels * self.roi_size**2
        self.roi_fc = nn.Sequential(nn.Linear(feat_dim, 128), nn.ReLU(inplace=True))
        self.roi_cls = nn.Linear(128, NUM_DET_CLASSES)
        self.roi_box = nn.Linear(128, 4)

    def rpn_forward(self, x: torch.Tensor):
        feat = self.trunk(x)
        rpn = self.rpn_head(feat)
        b, _, fh, fw = feat.shape
        na = self.anchor_config.num_anchors
        obj = self.rpn_obj(rpn).view(b, na, 2, fh, fw).permute(0, 3, 4, 1, 2).reshape(b, -1, 2)
        deltas = self.rpn_box(rpn).view(b, na, 4, fh, fw).permute(0, 3, 4, 1, 2).reshape(b, -1, 4)
        return feat, obj, deltas, (fh, fw)

    def roi_forward(self, feat_rois: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """feat_rois: (R, C, roi_size, roi_size) pooled features."""
        h = self.roi_fc(feat_rois.flatten(1))
        return self.roi_cls(h), self.roi_box(h)


def torch_roi_align(
    feat: torch.Tensor, boxes: torch.Tensor, out_size: int, samples_per_bin: int = 2
) -> torch.Tensor:
    """Differentiable ROI-Align on a (C, H, W) tensor for (R, 4) boxes.

    Same sampling convention as dualscreen.detector.roi_align: bins average
    samples_per_bin^2 bilinear samples, pixel centres at integer + 0.5.
    """
    c, h, w = feat.shape
    r = boxes.shape[0]
    n = samples_per_bin
    device = feat.device
    idx = (torch.arange(out_size * n, device=device, dtype=feat.dtype) + 0.5) / n
    x0, y0 = boxes[:, 0], boxes[:, 1]
    bw = (boxes[:, 2] - boxes[:, 0]) / out_size
    bh = (boxes[:, 3] - boxes[:, 1]) / out_size
    xs = x0[:, None] + idx[None, :] * bw[:, None]  # (R, out*n)
    ys = y0[:, None] + idx[None, :] * bh[:, None]
    # grid_sample with align_corners=False maps [-1, 1] to pixel edges,
    # which matches the centre-at-i+0.5 convention
    gx = xs * 2 / w - 1
    gy = ys * 2 / h - 1
    grid = torch.stack(
        [gx[:, None, :].expand(r, out_size * n, out_size * n),
         gy[:, :, None].expand(r, out_size * n, out_size * n)],
        dim=-1,
    )
    pooled = F.grid_sample(
        feat[None].expand(r, c, h, w), grid, mode="bilinear",
        padding_mode="border", align_corners=False,
    )
    pooled = pooled.view(r, c, out_size, n, out_size, n)
    return pooled.mean(dim=(3, 5))


def build_network(tag: str, anchor_config: AnchorConfig) -> nn.Module:
    if tag in SINGLE_STAGE_TAGS:
        return SingleStageDetector(anchor_config)
    if tag in TWO_STAGE_TAGS:
        return TwoStageDetector(anchor_config)
    raise ValueError(f"unknown architecture tag {tag!r}; expected one of {ARCHITECTURE_TAGS}")
