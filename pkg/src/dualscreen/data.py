"""Dataset ingestion, stratified splitting, augmentation, and crop extraction."""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import sample_region
from .types import (
    Annotation,
    AnomalyLabel,
    BoundingBox,
    Dataset,
    DatasetSplit,
    ImageRecord,
    ObjectClass,
)

MANIFEST_NAME = "manifest.jsonl"

SCALE_RANGE = (0.5, 2.0)


class DataError(Exception):
    """Raised for manifest / image-file problems during ingestion."""


def _parse_annotation(obj: dict, img_w: int, img_h: int, ctx: str) -> Annotation | None:
    """Build one Annotation, clipping its box to image bounds.

    Returns the clipped annotation; raises DataError if the clipped box has
    non-positive area.
    """
    x_min, y_min, x_max, y_max = (float(v) for v in obj["bbox"])
    x_min = min(max(x_min, 0.0), img_w)
    x_max = min(max(x_max, 0.0), img_w)
    y_min = min(max(y_min, 0.0), img_h)
    y_max = min(max(y_max, 0.0), img_h)
    if not (x_min < x_max and y_min < y_max):
        raise DataError(
            f"{ctx}: box {obj['bbox']} has non-positive area after clipping "
            f"(invariant x_min < x_max and y_min < y_max)"
        )
    return Annotation(
        bbox=BoundingBox(x_min, y_min, x_max, y_max),
        object_class=ObjectClass.from_name(obj["class"]),
        anomaly=AnomalyLabel.ANOMALOUS if obj["anomaly"] else AnomalyLabel.BENIGN,
    )


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset directory containing manifest.jsonl plus image files.

    Records come back in manifest order, fully validated, with boxes
    clipped to image bounds.
    """
    root = Path(path)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise DataError(f"no {MANIFEST_NAME} under {root}")

    records: Dataset = []
    seen: set[str] = set()
    with manifest.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rec_id = obj["id"]
                width = int(obj["width"])
                height = int(obj["height"])
                image_rel = obj["image"]
                raw_annotations = obj["annotations"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"manifest line {lineno}: malformed record ({exc})") from exc

            if rec_id in seen:
                raise DataError(f"manifest line {lineno}: duplicate id {rec_id!r}")
            seen.add(rec_id)

            image_path = root / image_rel
            if not image_path.is_file():
                raise DataError(f"record {rec_id!r}: image file {image_path} not found")
            with Image.open(image_path) as img:
                pixels = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
            if pixels.shape != (height, width, 3):
                raise DataError(
                    f"record {rec_id!r}: image is {pixels.shape[1]}x{pixels.shape[0]}, "
                    f"manifest says {width}x{height}"
                )

            annotations = [
                _parse_annotation(a, width, height, f"record {rec_id!r} (line {lineno})")
                for a in raw_annotations
            ]
            records.append(
                ImageRecord(
                    id=rec_id,
                    width=width,
                    height=height,
                    pixels=pixels,
                    annotations=annotations,
                )
            )
    return records


def _largest_remainder(n: int, ratios: tuple[float, ...]) -> list[int]:
    """Apportion n items to len(ratios) bins by the largest-remainder rule."""
    exact = [n * r for r in ratios]
    counts = [math.floor(e) for e in exact]
    remainder = n - sum(counts)
    # ties broken by bin order (train, validation, test)
    order = sorted(range(len(ratios)), key=lambda k: (-(exact[k] - counts[k]), k))
    for k in order[:remainder]:
        counts[k] += 1
    return counts


def _assignment_class(record: ImageRecord, class_freq: Counter) -> int | None:
    """Stratification bin: the rarest class present in the image (ties by code)."""
    present = {a.object_class for a in record.annotations}
    if not present:
        return None
    return min(present, key=lambda c: (class_freq[c], int(c)))


def stratified_split(
    dataset: Dataset,
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> DatasetSplit:
    """Partition image ids into train/validation/test with per-class stratification.

    Each image is binned by its rarest contained class; bins are shuffled
    deterministically and apportioned by largest remainder, so per-bin split
    sizes deviate from the exact ratios by at most 1.
    """
    if not dataset:
        raise ValueError("cannot split an empty dataset")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    class_freq: Counter = Counter()
    for rec in dataset:
        for cls in {a.object_class for a in rec.annotations}:
            class_freq[cls] += 1

    warnings = [
        f"class {cls.label!r} has only {class_freq[cls]} images; "
        "stratification is unreliable"
        for cls in ObjectClass
        if 0 < class_freq[cls] < 3
    ]

    bins: dict[int | None, list[str]] = {}
    for rec in dataset:
        key = _assignment_class(rec, class_freq)
        bins.setdefault(None if key is None else int(key), []).append(rec.id)

    rng = np.random.default_rng(seed)
    splits: tuple[list[str], list[str], list[str]] = ([], [], [])
    for key in sorted(bins, key=lambda k: (k is None, k)):
        ids = sorted(bins[key])
        rng.shuffle(ids)
        counts = _largest_remainder(len(ids), ratios)
        start = 0
        for part, count in zip(splits, counts):
            part.extend(ids[start : start + count])
            start += count

    return DatasetSplit(
        train=splits[0],
        validation=splits[1],
        test=splits[2],
        seed=seed,
        ratios=tuple(ratios),
        warnings=warnings,
    )


def save_split(split: DatasetSplit, path: str | Path) -> None:
    payload = {
        "seed": split.seed,
        "ratios": list(split.ratios),
        "train": split.train,
        "validation": split.validation,
        "test": split.test,
        "warnings": split.warnings,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_split(path: str | Path) -> DatasetSplit:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return DatasetSplit(
        train=list(payload["train"]),
        validation=list(payload["validation"]),
        test=list(payload["test"]),
        seed=int(payload["seed"]),
        ratios=tuple(payload["ratios"]),
        warnings=list(payload.get("warnings", [])),
    )


def flip_horizontal(record: ImageRecord) -> ImageRecord:
    """Mirror a record about the vertical axis; labels are untouched."""
    w = record.width
    flipped = [
        Annotation(
            bbox=BoundingBox(w - a.bbox.x_max, a.bbox.y_min, w - a.bbox.x_min, a.bbox.y_max),
            object_class=a.object_class,
            anomaly=a.anomaly,
        )
        for a in record.annotations
    ]
    return ImageRecord(
        id=record.id,
        width=record.width,
        height=record.height,
        pixels=record.pixels[:, ::-1].copy(),
        annotations=flipped,
        meta=dict(record.meta),
    )


def rescale(record: ImageRecord, factor: float) -> ImageRecord:
    """Bilinearly rescale a record, mapping boxes with the same factor."""
    lo, hi = SCALE_RANGE
    if not lo <= factor <= hi:
        raise ValueError(f"scale factor {factor} outside [{lo}, {hi}]")
    new_h = round(record.height * factor)
    new_w = round(record.width * factor)
    if factor == 1.0:
        pixels = record.pixels.copy()
    else:
        pixels = sample_region(
            record.pixels, 0.0, 0.0, float(record.width), float(record.height), new_h, new_w
        ).astype(np.float32)
    annotations = [
        Annotation(
            bbox=BoundingBox(
                a.bbox.x_min * factor,
                a.bbox.y_min * factor,
                a.bbox.x_max * factor,
                a.bbox.y_max * factor,
            ).clipped(new_w, new_h),
            object_class=a.object_class,
            anomaly=a.anomaly,
        )
        for a in record.annotations
    ]
    return ImageRecord(
        id=record.id,
        width=new_w,
        height=new_h,
        pixels=pixels,
        annotations=annotations,
        meta=dict(record.meta),
    )


def crop(
    record: ImageRecord,
    bbox: BoundingBox,
    pad_fraction: float = 0.1,
    output_size: tuple[int, int] = (128, 128),
) -> np.ndarray:
    """Extract a padded, clipped, bilinearly resampled patch around a box."""
    if pad_fraction < 0:
        raise ValueError("pad_fraction must be >= 0")
    if bbox.x_min >= record.width or bbox.x_max <= 0 or bbox.y_min >= record.height or bbox.y_max <= 0:
        raise ValueError(f"box {bbox} lies fully outside the {record.width}x{record.height} image")
    pad_x = pad_fraction * bbox.width
    pad_y = pad_fraction * bbox.height
    x0 = max(bbox.x_min - pad_x, 0.0)
    x1 = min(bbox.x_max + pad_x, float(record.width))
    y0 = max(bbox.y_min - pad_y, 0.0)
    y1 = min(bbox.y_max + pad_y, float(record.height))
    h, w = output_size
    return sample_region(record.pixels, x0, y0, x1, y1, h, w).astype(np.float32)
