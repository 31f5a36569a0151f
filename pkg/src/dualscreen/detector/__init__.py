"""Stage-1 object localisation: anchors, losses, ROI-Align, NMS, training."""

from .anchors import (
    AnchorConfig,
    LABEL_IGNORE,
    LABEL_NEGATIVE,
    assign_targets,
    decode_box,
    decode_boxes,
    encode_box,
    encode_boxes,
    generate_anchors,
    iou_matrix,
)
from .losses import focal_loss, smooth_l1
from .model import build_network
from .nms import nms
from .roi_align import roi_align
from .train import (
    DetectorModel,
    DetectorTrainConfig,
    apply_preset,
    detect,
    load_checkpoint,
    save_checkpoint,
    train_detector,
    validation_map50,
)

__all__ = [
    "AnchorConfig",
    "LABEL_IGNORE",
    "LABEL_NEGATIVE",
    "DetectorModel",
    "DetectorTrainConfig",
    "apply_preset",
    "assign_targets",
    "build_network",
    "decode_box",
    "decode_boxes",
    "detect",
    "encode_box",
    "encode_boxes",
    "focal_loss",
    "generate_anchors",
    "iou_matrix",
    "load_checkpoint",
    "nms",
    "roi_align",
    "save_checkpoint",
    "smooth_l1",
    "train_detector",
    "validation_map50",
]
