"""Procedural false-colour scene generator with ground-truth annotations.

Each of the six object classes renders as a distinct parametric silhouette
with per-instance size/rotation/hue jitter over layered translucent clutter.
Anomalous instances receive 1-3 small dense blobs strictly inside their
silhouette. Everything is a deterministic function of (seed, index).
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import MANIFEST_NAME
from .types import Annotation, AnomalyLabel, BoundingBox, ImageRecord, ObjectClass

# hue, saturation, value per class; hues well separated so classes are
# visually distinct at desk scale
CLASS_PALETTE = {
    ObjectClass.BOTTLE: (0.58, 0.75, 0.55),
    ObjectClass.HAIRDRYER: (0.08, 0.80, 0.60),
    ObjectClass.IRON: (0.33, 0.70, 0.50),
    ObjectClass.TOASTER: (0.78, 0.65, 0.55),
    ObjectClass.MOBILE: (0.98, 0.80, 0.50),
    ObjectClass.LAPTOP: (0.50, 0.70, 0.45),
}

# base half-extents (half-width, half-height) as fractions of image size
CLASS_EXTENT = {
    ObjectClass.BOTTLE: (0.050, 0.140),
    ObjectClass.HAIRDRYER: (0.105, 0.105),
    ObjectClass.IRON: (0.115, 0.075),
    ObjectClass.TOASTER: (0.105, 0.080),
    ObjectClass.MOBILE: (0.030, 0.066),
    ObjectClass.LAPTOP: (0.160, 0.110),
}

MAX_ROTATION_DEG = 15.0
PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class SceneConfig:
    image_size: tuple[int, int] = (128, 128)
    objects_per_image: tuple[int, int] = (2, 3)
    class_weights: tuple[float, ...] = (1.0,) * 6
    anomaly_rate: float = 0.5
    clutter_density: float = 0.5
    seed: int = 0
    anomaly_contrast: float = 0.45
    overlap_budget: float = 0.3

    def __post_init__(self) -> None:
        if len(self.class_weights) != 6 or all(w == 0 for w in self.class_weights):
            raise ValueError("class_weights must be 6 values, not all zero")
        if any(w < 0 for w in self.class_weights):
            raise ValueError("class_weights must be non-negative")
        if self.objects_per_image[0] < 1 or self.objects_per_image[0] > self.objects_per_image[1]:
            raise ValueError(f"bad objects_per_image range {self.objects_per_image}")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise ValueError("anomaly_rate must be in [0, 1]")
        if not 0.0 <= self.clutter_density <= 1.0:
            raise ValueError("clutter_density must be in [0, 1]")
        if self.image_size[0] < 32 or self.image_size[1] < 32:
            raise ValueError(f"image_size {self.image_size} too small; need at least 32x32")


def _silhouette(cls: ObjectClass, x: np.ndarray, y: np.ndarray, hw: float, hh: float) -> np.ndarray:
    """Boolean mask of the class motif in local (rotated) coordinates."""
    if cls is ObjectClass.BOTTLE:
        # capsule: narrow body with rounded ends
        r = hw
        body = (np.abs(x) < r) & (np.abs(y) < hh - r)
        caps = (x**2 + (np.abs(y) - (hh - r)) ** 2 < r**2) & (np.abs(y) >= hh - r)
        return body | caps
    if cls is ObjectClass.HAIRDRYER:
        # barrel disc plus an angled handle
        r = 0.72 * hw
        disc = x**2 + y**2 < r**2
        hx = x - 0.35 * hw
        hy = y - 0.55 * hh
        c, s = np.cos(0.6), np.sin(0.6)
        u = c * hx + s * hy
        v = -s * hx + c * hy
        handle = (np.abs(u) < 0.55 * hw) & (np.abs(v) < 0.22 * hh)
        return disc | handle
    if cls is ObjectClass.IRON:
        # flat-bottomed half ellipse (sole plate pointing up)
        return (x**2 / hw**2 + y**2 / hh**2 < 1.0) & (y < 0.45 * hh)
    if cls is ObjectClass.TOASTER:
        # rounded box (superellipse)
        return (np.abs(x) / hw) ** 4 + (np.abs(y) / hh) ** 4 < 1.0
    if cls is ObjectClass.MOBILE:
        return (np.abs(x) < hw) & (np.abs(y) < hh)
    if cls is ObjectClass.LAPTOP:
        return (np.abs(x) < hw) & (np.abs(y) < hh)
    raise ValueError(cls)


def _blend(img: np.ndarray, mask: np.ndarray, color: tuple[float, float, float], alpha: float) -> None:
    """Multiplicative translucent blend, X-ray attenuation style."""
    col = np.asarray(color, dtype=np.float64)
    img[mask] = img[mask] * (1.0 - alpha) + img[mask] * col * alpha


def _draw_clutter(img: np.ndarray, rng: np.random.Generator, density: float) -> None:
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    n = int(round(density * 22))
    for _ in range(n):
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        angle = rng.uniform(0, np.pi)
        length = rng.uniform(0.15, 0.5) * max(h, w)
        thick = rng.uniform(2.0, 7.0)
        c, s = np.cos(angle), np.sin(angle)
        u = c * (xx - cx) + s * (yy - cy)
        v = -s * (xx - cx) + c * (yy - cy)
        mask = (np.abs(u) < length / 2) & (np.abs(v) < thick / 2)
        hue = rng.uniform(0.0, 1.0)
        color = colorsys.hsv_to_rgb(hue, rng.uniform(0.1, 0.35), rng.uniform(0.75, 0.95))
        _blend(img, mask, color, alpha=rng.uniform(0.15, 0.35))


def _erode_candidates(mask: np.ndarray, radius: float) -> np.ndarray:
    """Pixels whose distance to the silhouette boundary exceeds radius."""
    from scipy import ndimage

    dist = ndimage.distance_transform_edt(mask)
    return dist > radius + 0.5


def _draw_anomaly_blobs(
    img: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
    contrast: float,
) -> None:
    from scipy import ndimage

    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    n_blobs = int(rng.integers(1, 4))
    dist = ndimage.distance_transform_edt(mask)
    for _ in range(n_blobs):
        radius = rng.uniform(1.8, 3.2)
        cand = np.argwhere(dist > radius + 0.5)
        if len(cand) == 0:
            # thin silhouette: shrink the blob to the deepest interior pixel
            flat = int(np.argmax(dist))
            cy, cx = np.unravel_index(flat, dist.shape)
            radius = max(1.0, float(dist[cy, cx]) - 1.0)
        else:
            cy, cx = cand[int(rng.integers(len(cand)))]
        blob = ((xx - cx) ** 2 + (yy - cy) ** 2 < radius**2) & mask
        # dense material: darken towards a deep navy tone
        dense = np.array([0.10, 0.08, 0.22])
        img[blob] = img[blob] * (1.0 - contrast) + dense * contrast


def generate_scene(config: SceneConfig, index: int) -> ImageRecord:
    """Render one scene. Deterministic in (config.seed, index)."""
    rng = np.random.default_rng([config.seed, index])
    h, w = config.image_size
    img = np.full((h, w, 3), 0.94, dtype=np.float64)
    img += rng.uniform(-0.02, 0.02, size=(h, w, 1))

    _draw_clutter(img, rng, config.clutter_density)

    yy, xx = np.mgrid[0:h, 0:w]
    n_objects = int(rng.integers(config.objects_per_image[0], config.objects_per_image[1] + 1))
    weights = np.asarray(config.class_weights, dtype=np.float64)
    weights = weights / weights.sum()

    placed_masks: list[np.ndarray] = []
    annotations: list[Annotation] = []
    scale_ref = min(h, w)

    for _ in range(n_objects):
        cls = ObjectClass(int(rng.choice(6, p=weights)))
        base_hw, base_hh = CLASS_EXTENT[cls]
        placed = None
        for _attempt in range(PLACEMENT_ATTEMPTS):
            jitter = rng.uniform(0.85, 1.2)
            hw_px = base_hw * scale_ref * jitter
            hh_px = base_hh * scale_ref * jitter
            angle = np.deg2rad(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
            margin = np.hypot(hw_px, hh_px) + 2
            if 2 * margin >= min(h, w):
                continue
            cx = rng.uniform(margin, w - margin)
            cy = rng.uniform(margin, h - margin)
            c, s = np.cos(angle), np.sin(angle)
            lx = c * (xx - cx) + s * (yy - cy)
            ly = -s * (xx - cx) + c * (yy - cy)
            mask = _silhouette(cls, lx, ly, hw_px, hh_px)
            if not mask.any():
                continue
            ok = True
            for other in placed_masks:
                inter = np.count_nonzero(mask & other)
                if inter:
                    union = np.count_nonzero(mask | other)
                    if inter / union > config.overlap_budget:
                        ok = False
                        break
            if ok:
                placed = mask
                break
        if placed is None:
            continue

        hue, sat, val = CLASS_PALETTE[cls]
        hue = (hue + rng.uniform(-0.025, 0.025)) % 1.0
        color = colorsys.hsv_to_rgb(hue, sat * rng.uniform(0.9, 1.1), val * rng.uniform(0.9, 1.1))
        _blend(img, placed, color, alpha=0.85)
        if cls is ObjectClass.LAPTOP:
            # inner screen rectangle, appearance only
            inner = (np.abs(c * (xx - cx) + s * (yy - cy)) < 0.7 * hw_px) & (
                np.abs(-s * (xx - cx) + c * (yy - cy)) < 0.65 * hh_px
            )
            _blend(img, inner, tuple(v * 0.7 for v in color), alpha=0.5)
        if cls is ObjectClass.TOASTER:
            slot = (np.abs(c * (xx - cx) + s * (yy - cy)) < 0.6 * hw_px) & (
                np.abs(-s * (xx - cx) + c * (yy - cy) + 0.45 * hh_px) < 0.08 * hh_px
            )
            _blend(img, slot, tuple(v * 0.5 for v in color), alpha=0.6)

        anomalous = bool(rng.random() < config.anomaly_rate)
        if anomalous:
            _draw_anomaly_blobs(img, placed, rng, config.anomaly_contrast)

        rows = np.any(placed, axis=1).nonzero()[0]
        cols = np.any(placed, axis=0).nonzero()[0]
        bbox = BoundingBox(
            float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1)
        )
        annotations.append(
            Annotation(
                bbox=bbox,
                object_class=cls,
                anomaly=AnomalyLabel.ANOMALOUS if anomalous else AnomalyLabel.BENIGN,
            )
        )
        placed_masks.append(placed)

    # quantise to 8 bit so in-memory pixels equal the PNG round trip
    img = np.clip(img, 0.0, 1.0)
    pixels = (np.round(img * 255.0) / 255.0).astype(np.float32)
    return ImageRecord(
        id=f"scene_{index:05d}",
        width=w,
        height=h,
        pixels=pixels,
        annotations=annotations,
        meta={"requested_objects": n_objects, "placed_objects": len(annotations)},
    )


def generate_dataset(config: SceneConfig, count: int, out_path: str | Path) -> Path:
    """Write `count` scenes plus a manifest under out_path; returns the manifest path."""
    root = Path(out_path)
    root.mkdir(parents=True, exist_ok=True)
    images_dir = root / "images"
    images_dir.mkdir(exist_ok=True)
    manifest = root / MANIFEST_NAME
    try:
        probe = root / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output path {root} is not writable: {exc}") from exc

    with manifest.open("w", encoding="utf-8") as fh:
        for index in range(count):
            record = generate_scene(config, index)
            rel = f"images/{record.id}.png"
            arr = np.round(record.pixels * 255.0).astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(root / rel)
            fh.write(
                json.dumps(
                    {
                        "id": record.id,
                        "image": rel,
                        "width": record.width,
                        "height": record.height,
                        "annotations": [
                            {
                                "bbox": [a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max],
                                "class": a.object_class.label,
                                "anomaly": a.is_anomalous,
                            }
                            for a in record.annotations
                        ],
                    }
                )
                + "\n"
            )
    return manifest
