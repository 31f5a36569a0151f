"""Two-class anomaly classifiers: plain backbones and the fine-grained
discriminative filter-bank head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .receptive import ConvSpec, FieldInfo, trace_fields

BACKBONE_TAGS = ("small", "medium", "residual")


@dataclass(frozen=True)
class FilterBankConfig:
    tap_layer: int = 8
    filters_per_class: int = 16
    receptive_patch: int = 92
    patch_stride: int = 8
    aux_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.filters_per_class < 0:
            raise ValueError("filters_per_class must be >= 0")


def _block(cin: int, cout: int, k: int, s: int, p: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, stride=s, padding=p),
        nn.GroupNorm(4, cout),
        nn.ReLU(inplace=True),
    )


class SmallBackbone(nn.Module):
    """Three stride-2 blocks; the lightest of the capacity ladder."""

    specs: list[ConvSpec] = [(3, 2, 1), (3, 2, 1), (3, 2, 1)]
    out_channels = 48

    def __init__(self) -> None:
        super().__init__()
        self.blocks = nn.ModuleList(
            [_block(3, 16, 3, 2, 1), _block(16, 32, 3, 2, 1), _block(32, 48, 3, 2, 1)]
        )

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for b in self.blocks:
            x = b(x)
            feats.append(x)
        return feats


class MediumBackbone(nn.Module):
    """Deeper trunk whose final tap layer sees 92x92 input patches at stride 8."""

    specs: list[ConvSpec] = [
        (4, 1, 1),
        (5, 2, 2),
        (3, 2, 1),
        (3, 2, 1),
        (3, 1, 1),
        (3, 1, 1),
        (3, 1, 1),
        (3, 1, 1),
        (2, 1, 0),
    ]
    out_channels = 64

    def __init__(self) -> None:
        super().__init__()
        chans = [3, 16, 24, 32, 48, 48, 48, 48, 48, 64]
        self.blocks = nn.ModuleList(
            [
                _block(chans[i], chans[i + 1], k, s, p)
                for i, (k, s, p) in enumerate(self.specs)
            ]
        )

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for b in self.blocks:
            x = b(x)
            feats.append(x)
        return feats


class _ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1)
        self.gn1 = nn.GroupNorm(4, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.gn2 = nn.GroupNorm(4, cout)
        self.skip = (
            nn.Conv2d(cin, cout, 1, stride=stride) if (stride != 1 or cin != cout) else nn.Identity()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.gn1(self.conv1(x)))
        h = self.gn2(self.conv2(h))
        return F.relu(h + self.skip(x))


class ResidualBackbone(nn.Module):
    """Skip-connected trunk; the largest of the capacity ladder.

    specs follow the longest path through each block, which is what the
    receptive-field arithmetic reports.
    """

    specs: list[ConvSpec] = [
        (3, 1, 1),
        (3, 2, 1),
        (3, 1, 1),
        (3, 2, 1),
        (3, 1, 1),
        (3, 2, 1),
        (3, 1, 1),
    ]
    out_channels = 64

    def __init__(self) -> None:
        super().__init__()
        self.stem = _block(3, 16, 3, 1, 1)
        self.layer1 = _ResBlock(16, 32, 2)
        self.layer2 = _ResBlock(32, 48, 2)
        self.layer3 = _ResBlock(48, 64, 2)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        f0 = self.stem(x)
        f1 = self.layer1(f0)
        f2 = self.layer2(f1)
        f3 = self.layer3(f2)
        return [f0, f1, f2, f3]


def build_backbone(tag: str) -> nn.Module:
    if tag == "small":
        return SmallBackbone()
    if tag == "medium":
        return MediumBackbone()
    if tag == "residual":
        return ResidualBackbone()
    raise ValueError(f"unknown backbone tag {tag!r}; expected one of {BACKBONE_TAGS}")


def tap_field_info(backbone: nn.Module, tap_layer: int) -> FieldInfo:
    fields = trace_fields(backbone.specs)
    # residual blocks contribute two conv layers per feature map
    if isinstance(backbone, ResidualBackbone):
        per_map = [fields[0], fields[2], fields[4], fields[6]]
        return per_map[tap_layer]
    return fields[tap_layer]


class AnomalyClassifier(nn.Module):
    """Backbone + global average pool + optional 1x1 discriminative filter bank.

    With filters_per_class = 0 the bank is absent and the network is the
    plain backbone classifier. With a bank, each filter's response map is
    reduced by spatial global max, the pooled vector is concatenated with
    the pooled backbone features ahead of the two-class head, and the
    per-class mean of pooled responses forms auxiliary logits trained with
    their own cross-entropy.
    """

    def __init__(self, backbone_tag: str, filter_config: FilterBankConfig | None = None) -> None:
        super().__init__()
        self.backbone_tag = backbone_tag
        self.backbone = build_backbone(backbone_tag)
        self.filter_config = filter_config
        n_filters = 0
        if filter_config is not None and filter_config.filters_per_class > 0:
            info = tap_field_info(self.backbone, filter_config.tap_layer)
            if info.rf != filter_config.receptive_patch or info.jump != filter_config.patch_stride:
                raise ValueError(
                    f"tap layer {filter_config.tap_layer} of backbone {backbone_tag!r} sees "
                    f"{info.rf}x{info.rf} patches at stride {info.jump}, not the configured "
                    f"{filter_config.receptive_patch}x{filter_config.receptive_patch} at stride "
                    f"{filter_config.patch_stride}"
                )
            n_filters = 2 * filter_config.filters_per_class
            tap_channels = self._tap_channels(filter_config.tap_layer)
            self.bank = nn.Conv2d(tap_channels, n_filters, 1)
        else:
            self.bank = None
        self.head = nn.Linear(self.backbone.out_channels + n_filters, 2)

    def _tap_channels(self, tap_layer: int) -> int:
        with torch.no_grad():
            feats = self.backbone.features(torch.zeros(1, 3, 128, 128))
        return feats[tap_layer].shape[1]

    @property
    def fine_grained(self) -> bool:
        return self.bank is not None

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Returns (main logits (B, 2), auxiliary logits (B, 2) or None)."""
        feats = self.backbone.features(x)
        pooled = feats[-1].mean(dim=(2, 3))
        if self.bank is None:
            return self.head(pooled), None
        resp = self.bank(feats[self.filter_config.tap_layer])
        bank_pooled = resp.amax(dim=(2, 3))  # each filter fires on its best patch
        f = self.filter_config.filters_per_class
        aux = torch.stack(
            [bank_pooled[:, :f].mean(dim=1), bank_pooled[:, f:].mean(dim=1)], dim=1
        )
        logits = self.head(torch.cat([pooled, bank_pooled], dim=1))
        return logits, aux

    def response_locations(self, x: torch.Tensor) -> torch.Tensor:
        """(B, n_filters, 2) argmax (row, col) of each filter's response map."""
        if self.bank is None:
            raise RuntimeError("model has no filter bank")
        feats = self.backbone.features(x)
        resp = self.bank(feats[self.filter_config.tap_layer])
        b, c, h, w = resp.shape
        flat = resp.flatten(2).argmax(dim=2)
        return torch.stack([flat // w, flat % w], dim=-1)


def attach_filter_bank(backbone_tag: str, config: FilterBankConfig) -> AnomalyClassifier:
    """Build a fine-grained classifier; raises if the tap geometry mismatches."""
    return AnomalyClassifier(backbone_tag, config)
