"""Detector training loop, inference, and checkpoint persistence."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..metrics import EvalConfig, evaluate_detections
from ..types import BoundingBox, Dataset, Detection, ImageRecord, ObjectClass
from .anchors import (
    AnchorConfig,
    LABEL_IGNORE,
    LABEL_NEGATIVE,
    assign_targets,
    decode_boxes,
    encode_boxes,
    generate_anchors,
    iou_matrix,
)
from .model import (
    ARCHITECTURE_TAGS,
    BACKGROUND,
    NUM_DET_CLASSES,
    SINGLE_STAGE_TAGS,
    SingleStageDetector,
    TwoStageDetector,
    build_network,
    torch_roi_align,
)

CHECKPOINT_VERSION = "dualscreen-det-v1"

NORM_MEAN = 0.5
NORM_STD = 0.5


@dataclass(frozen=True)
class DetectorTrainConfig:
    architecture: str = "reference"
    anchor_config: AnchorConfig = field(default_factory=AnchorConfig)
    iterations: int = 2000
    batch_size: int = 8
    lr: float = 0.0025
    momentum: float = 0.9
    weight_decay: float = 0.0001
    warmup_iters: int = 100
    lr_drop_at: float = 0.75  # fraction of the schedule, then lr / 10
    gamma: float = 2.0
    alpha: float = 0.25
    iou_neg: float = 0.4
    iou_pos: float = 0.5
    rpn_iou_neg: float = 0.3
    rpn_iou_pos: float = 0.7
    rpn_batch: int = 512  # per-image anchor sampling cap for the RPN loss
    roi_batch: int = 64
    augment_flip: bool = True
    eval_interval: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.architecture not in ARCHITECTURE_TAGS:
            raise ValueError(
                f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURE_TAGS}"
            )


def apply_preset(config: DetectorTrainConfig, preset: str) -> DetectorTrainConfig:
    """Named schedule presets; `deep_backbone` halves the lr and doubles the run."""
    if preset == "deep_backbone":
        return dataclasses.replace(config, lr=config.lr / 2, iterations=config.iterations * 2)
    raise ValueError(f"unknown preset {preset!r}")


@dataclass
class DetectorModel:
    net: nn.Module
    architecture: str
    anchor_config: AnchorConfig
    norm_mean: float = NORM_MEAN
    norm_std: float = NORM_STD
    seed: int = 0


def _to_tensor(record: ImageRecord, mean: float, std: float) -> torch.Tensor:
    arr = (record.pixels.astype(np.float32) - mean) / std
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def _feature_shape(h: int, w: int, stride: int = 8) -> tuple[int, int]:
    # three stride-2 convs with k3/p1: each halves as ceil(n / 2)
    fh, fw = h, w
    while stride > 1:
        fh = (fh + 1) // 2
        fw = (fw + 1) // 2
        stride //= 2
    return fh, fw


def softmax_focal_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    gamma: float,
    alpha: float,
) -> torch.Tensor:
    """Per-row focal terms for (N, K) logits; label K-channel 0 is background."""
    logp = F.log_softmax(logits, dim=-1)
    logp_t = logp.gather(-1, labels[:, None]).squeeze(-1)
    p_t = logp_t.exp()
    alpha_t = torch.where(labels == BACKGROUND, 1.0 - alpha, alpha)
    return alpha_t * (1.0 - p_t).pow(gamma) * -logp_t


class _Sample:
    """Precomputed training sample: tensors and anchor targets per orientation."""

    __slots__ = ("images", "labels", "regs", "size")

    def __init__(self, images, labels, regs, size):
        self.images = images
        self.labels = labels
        self.regs = regs
        self.size = size


def _prepare_samples(
    records: Dataset,
    anchors_by_size: dict[tuple[int, int], np.ndarray],
    config: DetectorTrainConfig,
    for_rpn: bool,
) -> list[_Sample]:
    from ..data import flip_horizontal

    iou_neg = config.rpn_iou_neg if for_rpn else config.iou_neg
    iou_pos = config.rpn_iou_pos if for_rpn else config.iou_pos
    samples = []
    for rec in records:
        size = (rec.height, rec.width)
        if size not in anchors_by_size:
            anchors_by_size[size] = generate_anchors(
                _feature_shape(rec.height, rec.width), config.anchor_config
            )
        anchors = anchors_by_size[size]
        variants = [rec, flip_horizontal(rec)] if config.augment_flip else [rec]
        images, labels, regs = [], [], []
        for var in variants:
            lab, reg, _ = assign_targets(anchors, var.annotations, iou_neg, iou_pos)
            images.append(_to_tensor(var, NORM_MEAN, NORM_STD))
            labels.append(torch.from_numpy(lab))
            regs.append(torch.from_numpy(reg.astype(np.float32)))
        samples.append(_Sample(images, labels, regs, size))
    return samples


def _single_stage_loss(
    net: SingleStageDetector,
    batch_imgs: torch.Tensor,
    batch_labels: torch.Tensor,
    batch_regs: torch.Tensor,
    config: DetectorTrainConfig,
) -> torch.Tensor:
    logits, deltas, _ = net(batch_imgs)
    logits = logits.reshape(-1, NUM_DET_CLASSES)
    deltas = deltas.reshape(-1, 4)
    labels = batch_labels.reshape(-1)
    regs = batch_regs.reshape(-1, 4)

    keep = labels != LABEL_IGNORE
    pos = labels >= 0
    num_pos = int(pos.sum().item())
    # channel layout: negative -> background channel 0, class c -> channel c + 1
    cls_labels = torch.where(pos, labels + 1, torch.zeros_like(labels))

    cls_loss = softmax_focal_loss(logits[keep], cls_labels[keep], config.gamma, config.alpha)
    loss = cls_loss.sum() / max(1, num_pos)
    if num_pos > 0:
        box_loss = F.smooth_l1_loss(deltas[pos], regs[pos], beta=1.0 / 9.0, reduction="mean")
        loss = loss + box_loss
    return loss


def _two_stage_loss(
    net: TwoStageDetector,
    batch_imgs: torch.Tensor,
    batch_labels: torch.Tensor,
    batch_regs: torch.Tensor,
    records: list[ImageRecord],
    anchors: np.ndarray,
    config: DetectorTrainConfig,
    rng: np.random.Generator,
) -> torch.Tensor:
    feat, obj, deltas, _ = net.rpn_forward(batch_imgs)
    b = batch_imgs.shape[0]
    losses = []
    for k in range(b):
        labels = batch_labels[k]
        regs = batch_regs[k]
        pos = labels >= 0
        neg = labels == LABEL_NEGATIVE
        pos_idx = pos.nonzero(as_tuple=True)[0]
        neg_idx = neg.nonzero(as_tuple=True)[0]
        # balanced sampling up to the per-image cap
        n_pos = min(len(pos_idx), config.rpn_batch // 2)
        n_neg = min(len(neg_idx), config.rpn_batch - n_pos)
        sel_pos = pos_idx[torch.from_numpy(rng.choice(len(pos_idx), n_pos, replace=False))] if n_pos else pos_idx[:0]
        sel_neg = neg_idx[torch.from_numpy(rng.choice(len(neg_idx), n_neg, replace=False))] if n_neg else neg_idx[:0]
        sel = torch.cat([sel_pos, sel_neg])
        obj_targets = (labels[sel] >= 0).long()
        obj_loss = F.cross_entropy(obj[k][sel], obj_targets)
        losses.append(obj_loss)
        if n_pos:
            losses.append(
                F.smooth_l1_loss(deltas[k][sel_pos], regs[sel_pos], beta=1.0 / 9.0)
            )

        # proposals for the ROI head: decoded top RPN boxes plus ground truth
        with torch.no_grad():
            scores = F.softmax(obj[k], dim=-1)[:, 1]
            top = torch.topk(scores, min(64, scores.numel())).indices
            props = decode_boxes(anchors[top.numpy()], deltas[k][top].numpy())
        rec = records[k]
        props[:, [0, 2]] = props[:, [0, 2]].clip(0, rec.width)
        props[:, [1, 3]] = props[:, [1, 3]].clip(0, rec.height)
        valid = (props[:, 2] - props[:, 0] > 1) & (props[:, 3] - props[:, 1] > 1)
        props = props[valid]
        gt_boxes = np.stack([a.bbox.as_array() for a in rec.annotations]) if rec.annotations else np.zeros((0, 4))
        rois = np.concatenate([props, gt_boxes], axis=0)
        if len(rois) == 0:
            continue
        if len(rois) > config.roi_batch:
            keep_idx = rng.choice(len(rois), config.roi_batch, replace=False)
            rois = rois[keep_idx]
        roi_labels = np.zeros(len(rois), dtype=np.int64)
        roi_regs = np.zeros((len(rois), 4), dtype=np.float32)
        if len(gt_boxes):
            ious = iou_matrix(rois, gt_boxes)
            best = ious.argmax(axis=1)
            best_iou = ious[np.arange(len(rois)), best]
            fg = best_iou >= config.iou_pos
            roi_labels[fg] = np.array(
                [int(rec.annotations[g].object_class) + 1 for g in best[fg]], dtype=np.int64
            )
            if fg.any():
                roi_regs[fg] = encode_boxes(rois[fg], gt_boxes[best[fg]]).astype(np.float32)
        roi_boxes_feat = torch.from_numpy((rois / net.trunk.stride).astype(np.float32))
        pooled = torch_roi_align(feat[k], roi_boxes_feat, net.roi_size)
        cls_logits, box_pred = net.roi_forward(pooled)
        losses.append(F.cross_entropy(cls_logits, torch.from_numpy(roi_labels)))
        fg_mask = torch.from_numpy(roi_labels > 0)
        if fg_mask.any():
            losses.append(
                F.smooth_l1_loss(
                    box_pred[fg_mask], torch.from_numpy(roi_regs)[fg_mask], beta=1.0 / 9.0
                )
            )
    return torch.stack(losses).sum() / b


def train_detector(
    train: Dataset,
    val: Dataset,
    config: DetectorTrainConfig,
    log: list[dict] | None = None,
) -> DetectorModel:
    """Train a detector and return the checkpoint with best validation mAP@0.5.

    Deterministic for a fixed seed on a single device. Raises RuntimeError
    naming the iteration if the loss becomes non-finite.
    """
    if not train:
        raise ValueError("training set is empty")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    net = build_network(config.architecture, config.anchor_config)
    model = DetectorModel(
        net=net,
        architecture=config.architecture,
        anchor_config=config.anchor_config,
        seed=config.seed,
    )
    if config.iterations == 0:
        net.eval()
        return model

    two_stage = config.architecture not in SINGLE_STAGE_TAGS
    anchors_by_size: dict[tuple[int, int], np.ndarray] = {}
    samples = _prepare_samples(train, anchors_by_size, config, for_rpn=two_stage)
    by_size: dict[tuple[int, int], list[int]] = {}
    for i, s in enumerate(samples):
        by_size.setdefault(s.size, []).append(i)
    size_keys = sorted(by_size)
    size_weights = np.array([len(by_size[k]) for k in size_keys], dtype=np.float64)
    size_weights /= size_weights.sum()

    opt = torch.optim.SGD(
        net.parameters(),
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )
    drop_at = int(config.lr_drop_at * config.iterations)

    best_map = -1.0
    best_state = None
    net.train()
    for it in range(config.iterations):
        if it < config.warmup_iters:
            lr = config.lr * (0.1 + 0.9 * it / config.warmup_iters)
        elif it >= drop_at:
            lr = config.lr / 10
        else:
            lr = config.lr
        for group in opt.param_groups:
            group["lr"] = lr

        size = size_keys[int(rng.choice(len(size_keys), p=size_weights))]
        pool = by_size[size]
        idx = rng.choice(len(pool), size=min(config.batch_size, len(pool)), replace=len(pool) < config.batch_size)
        chosen = [samples[pool[i]] for i in idx]
        variant = rng.integers(0, 2, size=len(chosen)) if config.augment_flip else np.zeros(len(chosen), dtype=int)
        imgs = torch.stack([s.images[v] for s, v in zip(chosen, variant)])
        labels = torch.stack([s.labels[v] for s, v in zip(chosen, variant)])
        regs = torch.stack([s.regs[v] for s, v in zip(chosen, variant)])

        if two_stage:
            recs = []
            for i, v in zip(idx, variant):
                rec = train[pool[i]]
                if v:
                    from ..data import flip_horizontal

                    rec = flip_horizontal(rec)
                recs.append(rec)
            loss = _two_stage_loss(
                net, imgs, labels, regs, recs, anchors_by_size[size], config, rng
            )
        else:
            loss = _single_stage_loss(net, imgs, labels, regs, config)

        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged: non-finite loss at iteration {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log is not None:
            log.append({"iteration": it, "loss": float(loss.item()), "lr": lr})

        last = it == config.iterations - 1
        if val and config.eval_interval > 0 and ((it + 1) % config.eval_interval == 0 or last):
            current = validation_map50(model, val)
            if log is not None:
                log.append({"iteration": it, "val_map50": current})
            if current > best_map:
                best_map = current
                best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}
            net.train()

    if best_state is not None:
        net.load_state_dict(best_state)
    net.eval()
    return model


def validation_map50(model: DetectorModel, records: Dataset) -> float:
    dets = {rec.id: detect(model, rec, score_threshold=0.05, nms_threshold=0.5) for rec in records}
    report = evaluate_detections(dets, records, EvalConfig(theta_set=(0.5,)))
    return report.map50


def detect(
    model: DetectorModel,
    record: ImageRecord,
    score_threshold: float = 0.3,
    nms_threshold: float = 0.5,
) -> list[Detection]:
    """Run inference on one record: decode, clip, threshold, per-class NMS."""
    from .nms import nms

    net = model.net
    net.eval()
    with torch.no_grad():
        img = _to_tensor(record, model.norm_mean, model.norm_std)[None]
        if isinstance(net, SingleStageDetector):
            logits, deltas, fshape = net(img)
            anchors = generate_anchors(fshape, model.anchor_config)
            probs = F.softmax(logits[0], dim=-1).numpy()
            scores = probs[:, 1:]
            best_cls = scores.argmax(axis=1)
            best_score = scores[np.arange(len(scores)), best_cls]
            keep = best_score >= score_threshold
            if not keep.any():
                return []
            order = np.argsort(-best_score[keep], kind="stable")[:300]
            sel = np.flatnonzero(keep)[order]
            boxes = decode_boxes(anchors[sel], deltas[0].numpy()[sel])
            cls_sel = best_cls[sel]
            score_sel = best_score[sel]
        else:
            feat, obj, rpn_deltas, fshape = net.rpn_forward(img)
            anchors = generate_anchors(fshape, model.anchor_config)
            obj_scores = F.softmax(obj[0], dim=-1)[:, 1].numpy()
            top = np.argsort(-obj_scores, kind="stable")[:200]
            props = decode_boxes(anchors[top], rpn_deltas[0].numpy()[top])
            props[:, [0, 2]] = props[:, [0, 2]].clip(0, record.width)
            props[:, [1, 3]] = props[:, [1, 3]].clip(0, record.height)
            valid = (props[:, 2] - props[:, 0] > 1) & (props[:, 3] - props[:, 1] > 1)
            props = props[valid]
            if len(props) == 0:
                return []
            pooled = torch_roi_align(
                feat[0], torch.from_numpy((props / net.trunk.stride).astype(np.float32)),
                net.roi_size,
            )
            cls_logits, box_pred = net.roi_forward(pooled)
            probs = F.softmax(cls_logits, dim=-1).numpy()
            scores = probs[:, 1:]
            best_cls = scores.argmax(axis=1)
            best_score = scores[np.arange(len(scores)), best_cls]
            keep = best_score >= score_threshold
            if not keep.any():
                return []
            sel = np.flatnonzero(keep)
            boxes = decode_boxes(props[sel], box_pred.numpy()[sel])
            cls_sel = best_cls[sel]
            score_sel = best_score[sel]
            order = np.argsort(-score_sel, kind="stable")
            boxes, cls_sel, score_sel = boxes[order], cls_sel[order], score_sel[order]

    detections: list[Detection] = []
    for box, cls, score in zip(boxes, cls_sel, score_sel):
        x0 = float(np.clip(box[0], 0, record.width))
        y0 = float(np.clip(box[1], 0, record.height))
        x1 = float(np.clip(box[2], 0, record.width))
        y1 = float(np.clip(box[3], 0, record.height))
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            continue
        detections.append(
            Detection(
                bbox=BoundingBox(x0, y0, x1, y1),
                object_class=ObjectClass(int(cls)),
                score=float(min(max(score, 0.0), 1.0)),
            )
        )
    kept = nms(detections, nms_threshold)
    return sorted(kept, key=lambda d: -d.score)


def save_checkpoint(model: DetectorModel, path: str | Path) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "architecture": model.architecture,
        "anchor_config": dataclasses.asdict(model.anchor_config),
        "norm": {"mean": model.norm_mean, "std": model.norm_std},
        "seed": model.seed,
        "state_dict": model.net.state_dict(),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> DetectorModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    anchor_config = AnchorConfig(
        scales=tuple(payload["anchor_config"]["scales"]),
        aspect_ratios=tuple(payload["anchor_config"]["aspect_ratios"]),
        stride=payload["anchor_config"]["stride"],
    )
    net = build_network(payload["architecture"], anchor_config)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return DetectorModel(
        net=net,
        architecture=payload["architecture"],
        anchor_config=anchor_config,
        norm_mean=payload["norm"]["mean"],
        norm_std=payload["norm"]["std"],
        seed=payload["seed"],
    )
