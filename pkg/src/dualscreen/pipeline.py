"""End-to-end dual-stage evaluation: detect, crop, classify, report."""

from __future__ import annotations

from dataclasses import dataclass

from .classifier.train import ClassifierModel, classify, crop_for_detection
from .detector.train import DetectorModel, detect
from .metrics import (
    DetectionReport,
    EvalConfig,
    PipelineReport,
    classification_report,
    evaluate_detections,
    iou,
)
from .types import AnomalyLabel, Dataset, Detection, ImageRecord

MATCH_IOU = 0.5


@dataclass
class ScreenedDetection:
    """A detection with its stage-2 verdict attached."""

    detection: Detection
    anomaly: AnomalyLabel
    anomaly_score: float


def screen_image(
    det_model: DetectorModel,
    cls_model: ClassifierModel,
    record: ImageRecord,
    score_threshold: float = 0.3,
    nms_threshold: float = 0.5,
    pad_fraction: float = 0.1,
) -> list[ScreenedDetection]:
    """Stage 1 then stage 2 on one image."""
    out = []
    for det in detect(det_model, record, score_threshold, nms_threshold):
        patch = crop_for_detection(record, det, pad_fraction, cls_model.input_size)
        label, score = classify(cls_model, patch)
        out.append(ScreenedDetection(detection=det, anomaly=label, anomaly_score=score))
    return out


def _degenerate_report() -> PipelineReport:
    return PipelineReport(
        tp=0, fp=0, fn=0, tn=0,
        accuracy=None, precision=None, recall=None, f1=None,
        tp_pct=None, fp_pct=None, degenerate=True,
    )


def evaluate_pipeline(
    det_model: DetectorModel,
    cls_model: ClassifierModel,
    test: Dataset,
    score_threshold: float = 0.3,
    nms_threshold: float = 0.5,
    pad_fraction: float = 0.1,
    eval_config: EvalConfig | None = None,
) -> tuple[PipelineReport, DetectionReport]:
    """Run the dual pipeline over a test set and emit both reports.

    Each detection inherits the ground-truth anomaly label of its best-IoU
    ground-truth box (IoU >= 0.5); unmatched detections are excluded from
    the classification report but still count in the detection metrics.
    """
    detections_by_image: dict[str, list[Detection]] = {}
    predicted: list[AnomalyLabel] = []
    truth: list[AnomalyLabel] = []

    for rec in test:
        screened = screen_image(
            det_model, cls_model, rec, score_threshold, nms_threshold, pad_fraction
        )
        detections_by_image[rec.id] = [s.detection for s in screened]
        for s in screened:
            best_iou = 0.0
            best_ann = None
            for ann in rec.annotations:
                v = iou(s.detection.bbox, ann.bbox)
                if v > best_iou:
                    best_iou = v
                    best_ann = ann
            if best_ann is not None and best_iou >= MATCH_IOU:
                predicted.append(s.anomaly)
                truth.append(best_ann.anomaly)

    det_report = evaluate_detections(detections_by_image, test, eval_config)
    if predicted:
        cls_report = classification_report(predicted, truth)
    else:
        cls_report = _degenerate_report()
    return cls_report, det_report
