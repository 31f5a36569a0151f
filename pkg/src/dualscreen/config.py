"""Flat dotted-key run configuration: file + command-line overrides."""

from __future__ import annotations

import json
from pathlib import Path

from .classifier import ClassifierTrainConfig, FilterBankConfig
from .detector import AnchorConfig, DetectorTrainConfig, apply_preset
from .synth import SceneConfig


class ConfigError(Exception):
    pass


def parse_value(text: str):
    """Values are JSON literals; bare words fall back to strings."""
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_file(path: str | Path) -> dict:
    """Read `dotted.key = value` lines; blank lines and # comments allowed."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = parse_value(value)
    return out


def merge_overrides(config: dict, overrides: tuple[str, ...]) -> dict:
    """Apply KEY=VALUE override strings on top of a config dict; flags win."""
    merged = dict(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, _, value = item.partition("=")
        merged[key.strip()] = parse_value(value)
    return merged


class RunConfig:
    """Resolved flat key-value configuration for one command run."""

    def __init__(self, values: dict | None = None):
        self.values = dict(values or {})

    @classmethod
    def load(cls, config_path: str | None, overrides: tuple[str, ...] = ()) -> "RunConfig":
        base = parse_config_file(config_path) if config_path else {}
        return cls(merge_overrides(base, overrides))

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def seed(self) -> int:
        return int(self.get("seed", 0))

    def scene_config(self) -> SceneConfig:
        g = lambda k, d: self.get(f"gen.{k}", d)
        return SceneConfig(
            image_size=(int(g("height", 128)), int(g("width", 128))),
            objects_per_image=(int(g("objects_min", 2)), int(g("objects_max", 3))),
            class_weights=tuple(g("class_weights", [1.0] * 6)),
            anomaly_rate=float(g("anomaly_rate", 0.5)),
            clutter_density=float(g("clutter_density", 0.5)),
            seed=int(g("seed", self.seed())),
            anomaly_contrast=float(g("anomaly_contrast", 0.45)),
            overlap_budget=float(g("overlap_budget", 0.3)),
        )

    def anchor_config(self) -> AnchorConfig:
        g = lambda k, d: self.get(f"det.anchor.{k}", d)
        return AnchorConfig(
            scales=tuple(g("scales", [12.0, 21.0, 34.0])),
            aspect_ratios=tuple(g("aspect_ratios", [0.5, 1.0, 2.0])),
            stride=int(g("stride", 8)),
        )

    def detector_config(self) -> DetectorTrainConfig:
        g = lambda k, d: self.get(f"det.{k}", d)
        cfg = DetectorTrainConfig(
            architecture=g("architecture", "reference"),
            anchor_config=self.anchor_config(),
            iterations=int(g("iterations", 2000)),
            batch_size=int(g("batch_size", 8)),
            lr=float(g("lr", 0.0025)),
            momentum=float(g("momentum", 0.9)),
            weight_decay=float(g("weight_decay", 0.0001)),
            warmup_iters=int(g("warmup_iters", 100)),
            gamma=float(g("gamma", 2.0)),
            alpha=float(g("alpha", 0.25)),
            augment_flip=bool(g("augment_flip", True)),
            eval_interval=int(g("eval_interval", 200)),
            seed=int(g("seed", self.seed())),
        )
        preset = g("preset", None)
        if preset:
            cfg = apply_preset(cfg, preset)
        return cfg

    def filter_config(self) -> FilterBankConfig:
        g = lambda k, d: self.get(f"cls.filter.{k}", d)
        return FilterBankConfig(
            tap_layer=int(g("tap_layer", 8)),
            filters_per_class=int(g("filters_per_class", 16)),
            receptive_patch=int(g("receptive_patch", 92)),
            patch_stride=int(g("patch_stride", 8)),
            aux_weight=float(g("aux_weight", 0.5)),
        )

    def classifier_config(self) -> ClassifierTrainConfig:
        g = lambda k, d: self.get(f"cls.{k}", d)
        size = int(g("input_size", 128))
        return ClassifierTrainConfig(
            backbone=g("backbone", "small"),
            fine_grained=bool(g("fine_grained", False)),
            filter_config=self.filter_config(),
            input_size=(size, size),
            iterations=int(g("iterations", 600)),
            batch_size=int(g("batch_size", 32)),
            lr=float(g("lr", 1e-3)),
            weight_decay=float(g("weight_decay", 1e-4)),
            eval_interval=int(g("eval_interval", 100)),
            seed=int(g("seed", self.seed())),
        )

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))
