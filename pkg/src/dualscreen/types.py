"""Core data model shared by every pipeline stage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np


class ObjectClass(IntEnum):
    """The six object categories handled by the screening pipeline."""

    BOTTLE = 0
    HAIRDRYER = 1
    IRON = 2
    TOASTER = 3
    MOBILE = 4
    LAPTOP = 5

    @classmethod
    def from_name(cls, name: str) -> "ObjectClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown object class {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


CLASS_NAMES = tuple(c.label for c in ObjectClass)
NUM_CLASSES = len(ObjectClass)


class AnomalyLabel(Enum):
    BENIGN = "benign"
    ANOMALOUS = "anomalous"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box over continuous half-open pixel intervals.

    Area is (x_max - x_min) * (y_max - y_min); no +1 pixel conventions.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if min(coords) < 0:
            raise ValueError(f"negative box coordinates {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box: require x_min < x_max and y_min < y_max, got {coords}"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=np.float64)

    def clipped(self, width: float, height: float) -> "BoundingBox":
        """Clip to the [0, width] x [0, height] image extent."""
        return BoundingBox(
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )


@dataclass(frozen=True)
class Annotation:
    bbox: BoundingBox
    object_class: ObjectClass
    anomaly: AnomalyLabel

    @property
    def is_anomalous(self) -> bool:
        return self.anomaly is AnomalyLabel.ANOMALOUS


@dataclass
class ImageRecord:
    """One scene with its ground truth; immutable by convention after load."""

    id: str
    width: int
    height: int
    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]
    annotations: list[Annotation]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"record {self.id!r}: non-positive image size")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"record {self.id!r}: pixel shape {self.pixels.shape} does not match "
                f"({self.height}, {self.width}, 3)"
            )


Dataset = list[ImageRecord]


@dataclass(frozen=True)
class Detection:
    """Stage-1 output: a scored class-labelled box."""

    bbox: BoundingBox
    object_class: ObjectClass
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass
class DatasetSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    warnings: list[str] = field(default_factory=list)

    def all_ids(self) -> set[str]:
        return set(self.train) | set(self.validation) | set(self.test)
