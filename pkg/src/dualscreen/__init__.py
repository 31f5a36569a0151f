"""Dual-stage screening: localise objects, then classify each as anomalous or benign."""

from .types import (
    Annotation,
    AnomalyLabel,
    BoundingBox,
    Dataset,
    DatasetSplit,
    Detection,
    ImageRecord,
    ObjectClass,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnomalyLabel",
    "BoundingBox",
    "Dataset",
    "DatasetSplit",
    "Detection",
    "ImageRecord",
    "ObjectClass",
    "__version__",
]
