"""Classifier training, inference, crop preparation, and checkpoints."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..data import crop
from ..imaging import resize
from ..types import AnomalyLabel, Dataset, Detection, ImageRecord, ObjectClass
from .model import AnomalyClassifier, BACKBONE_TAGS, FilterBankConfig

CHECKPOINT_VERSION = "dualscreen-cls-v1"


@dataclass
class CropSample:
    patch: np.ndarray  # (h, w, 3) float32 in [0, 1]
    label: AnomalyLabel
    source_class: ObjectClass | None = None
    source_image_id: str = ""


@dataclass(frozen=True)
class ClassifierTrainConfig:
    backbone: str = "small"
    fine_grained: bool = False
    filter_config: FilterBankConfig = field(default_factory=FilterBankConfig)
    input_size: tuple[int, int] = (128, 128)
    iterations: int = 600
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    eval_interval: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONE_TAGS:
            raise ValueError(f"unknown backbone {self.backbone!r}; expected one of {BACKBONE_TAGS}")


@dataclass
class ClassifierModel:
    net: AnomalyClassifier
    backbone: str
    fine_grained: bool
    input_size: tuple[int, int]
    filter_config: FilterBankConfig | None = None
    seed: int = 0
    threshold: float = 0.5


def _stack_patches(samples: list[CropSample], input_size: tuple[int, int]) -> torch.Tensor:
    h, w = input_size
    arrs = []
    for s in samples:
        if s.patch.shape != (h, w, 3):
            raise ValueError(f"patch shape {s.patch.shape} does not match input size {(h, w, 3)}")
        arrs.append(s.patch)
    x = torch.from_numpy(np.stack(arrs).astype(np.float32))
    return (x.permute(0, 3, 1, 2) - 0.5) / 0.5


def _labels_tensor(samples: list[CropSample]) -> torch.Tensor:
    return torch.tensor([1 if s.label is AnomalyLabel.ANOMALOUS else 0 for s in samples])


def _init_bank_from_patches(
    net: AnomalyClassifier, x: torch.Tensor, labels: torch.Tensor, rng: np.random.Generator
) -> None:
    """Seed bank filters with energy-normalised tap features sampled per class."""
    cfg = net.filter_config
    with torch.no_grad():
        feats = net.backbone.features(x)[cfg.tap_layer]  # (B, C, H, W)
        b, c, h, w = feats.shape
        weights = []
        for cls in (0, 1):
            idx = (labels == cls).nonzero(as_tuple=True)[0].numpy()
            if len(idx) == 0:
                idx = np.arange(b)
            for _ in range(cfg.filters_per_class):
                i = int(rng.choice(idx))
                r = int(rng.integers(h))
                col = int(rng.integers(w))
                vec = feats[i, :, r, col]
                weights.append(vec / (vec.norm() + 1e-6))
        net.bank.weight.copy_(torch.stack(weights).view(-1, c, 1, 1))
        net.bank.bias.zero_()


def train_classifier(
    crops: list[CropSample],
    val_crops: list[CropSample],
    config: ClassifierTrainConfig,
    log: list[dict] | None = None,
) -> ClassifierModel:
    """Train a two-class classifier; returns the best-validation-accuracy checkpoint.

    Class imbalance is handled by inverse-frequency loss weights. A
    training set with a single label cannot fit a two-class model and is
    rejected.
    """
    labels = _labels_tensor(crops)
    counts = torch.bincount(labels, minlength=2)
    if (counts == 0).any():
        missing = "anomalous" if counts[1] == 0 else "benign"
        raise ValueError(f"training crops contain no {missing} samples; need both labels")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    net = AnomalyClassifier(
        config.backbone, config.filter_config if config.fine_grained else None
    )
    x = _stack_patches(crops, config.input_size)
    if net.fine_grained:
        _init_bank_from_patches(net, x, labels, rng)
    xv = _stack_patches(val_crops, config.input_size) if val_crops else None
    yv = _labels_tensor(val_crops) if val_crops else None

    class_weights = counts.sum() / (2.0 * counts.clamp(min=1).float())
    opt = torch.optim.Adam(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    best_acc = -1.0
    best_state = None
    net.train()
    n = len(crops)
    for it in range(config.iterations):
        idx = rng.choice(n, size=min(config.batch_size, n), replace=n < config.batch_size)
        bx = x[idx]
        by = labels[idx]
        logits, aux = net(bx)
        loss = F.cross_entropy(logits, by, weight=class_weights)
        if aux is not None:
            loss = loss + net.filter_config.aux_weight * F.cross_entropy(aux, by)
        if not torch.isfinite(loss):
            raise RuntimeError(f"classifier training diverged at iteration {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log is not None:
            log.append({"iteration": it, "loss": float(loss.item())})

        last = it == config.iterations - 1
        if xv is not None and config.eval_interval > 0 and ((it + 1) % config.eval_interval == 0 or last):
            net.eval()
            with torch.no_grad():
                acc = float((net(xv)[0].argmax(dim=1) == yv).float().mean())
            if log is not None:
                log.append({"iteration": it, "val_accuracy": acc})
            if acc > best_acc:
                best_acc = acc
                best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}
            net.train()

    if best_state is not None:
        net.load_state_dict(best_state)
    net.eval()
    return ClassifierModel(
        net=net,
        backbone=config.backbone,
        fine_grained=net.fine_grained,
        input_size=config.input_size,
        filter_config=net.filter_config,
        seed=config.seed,
    )


def classify(model: ClassifierModel, patch: np.ndarray) -> tuple[AnomalyLabel, float]:
    """Label a single patch; score is the probability of `anomalous`."""
    h, w = model.input_size
    if patch.shape != (h, w, 3):
        raise ValueError(f"patch shape {patch.shape} does not match model input {(h, w, 3)}")
    x = torch.from_numpy(patch.astype(np.float32)).permute(2, 0, 1)[None]
    x = (x - 0.5) / 0.5
    model.net.eval()
    with torch.no_grad():
        logits, _ = model.net(x)
        score = float(F.softmax(logits, dim=1)[0, 1])
    label = AnomalyLabel.ANOMALOUS if score >= model.threshold else AnomalyLabel.BENIGN
    return label, score


def classify_full_image(model: ClassifierModel, record: ImageRecord) -> tuple[AnomalyLabel, float]:
    """Whole-image baseline: resize the record to the model input and classify."""
    h, w = model.input_size
    patch = resize(record.pixels, h, w).astype(np.float32)
    return classify(model, patch)


def record_anomaly_label(record: ImageRecord) -> AnomalyLabel:
    """Ground-truth convention: an image is anomalous iff any annotation is."""
    return (
        AnomalyLabel.ANOMALOUS
        if any(a.is_anomalous for a in record.annotations)
        else AnomalyLabel.BENIGN
    )


def crops_from_ground_truth(
    dataset: Dataset,
    pad_fraction: float = 0.1,
    output_size: tuple[int, int] = (128, 128),
) -> list[CropSample]:
    samples = []
    for rec in dataset:
        for ann in rec.annotations:
            samples.append(
                CropSample(
                    patch=crop(rec, ann.bbox, pad_fraction, output_size),
                    label=ann.anomaly,
                    source_class=ann.object_class,
                    source_image_id=rec.id,
                )
            )
    return samples


def full_image_samples(
    dataset: Dataset, input_size: tuple[int, int] = (128, 128)
) -> list[CropSample]:
    h, w = input_size
    return [
        CropSample(
            patch=resize(rec.pixels, h, w).astype(np.float32),
            label=record_anomaly_label(rec),
            source_image_id=rec.id,
        )
        for rec in dataset
    ]


def crop_for_detection(
    record: ImageRecord,
    detection: Detection,
    pad_fraction: float = 0.1,
    output_size: tuple[int, int] = (128, 128),
) -> np.ndarray:
    return crop(record, detection.bbox, pad_fraction, output_size)


def save_checkpoint(model: ClassifierModel, path: str | Path) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "backbone": model.backbone,
        "fine_grained": model.fine_grained,
        "filter_config": dataclasses.asdict(model.filter_config) if model.filter_config else None,
        "input_size": list(model.input_size),
        "seed": model.seed,
        "threshold": model.threshold,
        "state_dict": model.net.state_dict(),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> ClassifierModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    fc = payload["filter_config"]
    filter_config = FilterBankConfig(**fc) if fc else None
    net = AnomalyClassifier(payload["backbone"], filter_config if payload["fine_grained"] else None)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return ClassifierModel(
        net=net,
        backbone=payload["backbone"],
        fine_grained=payload["fine_grained"],
        input_size=tuple(payload["input_size"]),
        filter_config=filter_config,
        seed=payload["seed"],
        threshold=payload["threshold"],
    )
