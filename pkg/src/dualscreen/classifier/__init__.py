"""Stage-2 anomaly/benign classification of object crops."""

from .model import (
    AnomalyClassifier,
    BACKBONE_TAGS,
    FilterBankConfig,
    attach_filter_bank,
    build_backbone,
    tap_field_info,
)
from .receptive import FieldInfo, trace_fields, unit_patch
from .train import (
    ClassifierModel,
    ClassifierTrainConfig,
    CropSample,
    classify,
    classify_full_image,
    crop_for_detection,
    crops_from_ground_truth,
    full_image_samples,
    load_checkpoint,
    record_anomaly_label,
    save_checkpoint,
    train_classifier,
)

__all__ = [
    "AnomalyClassifier",
    "BACKBONE_TAGS",
    "ClassifierModel",
    "ClassifierTrainConfig",
    "CropSample",
    "FieldInfo",
    "FilterBankConfig",
    "attach_filter_bank",
    "build_backbone",
    "classify",
    "classify_full_image",
    "crop_for_detection",
    "crops_from_ground_truth",
    "full_image_samples",
    "load_checkpoint",
    "record_anomaly_label",
    "save_checkpoint",
    "tap_field_info",
    "trace_fields",
    "train_classifier",
    "unit_patch",
]
