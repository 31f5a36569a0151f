"""Bilinear sampling primitives used for rescaling, cropping, and model inputs.

Coordinate convention: pixel (i, j) occupies the unit square
[j, j+1) x [i, i+1) with its centre at (j + 0.5, i + 0.5). Samples outside
the image replicate the border pixel.
"""

from __future__ import annotations

import numpy as np


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample an (H, W, C) image at continuous positions.

    xs/ys are broadcast-compatible arrays of x (column) and y (row)
    coordinates. Returns an array of shape broadcast(xs, ys) + (C,).
    """
    h, w = image.shape[:2]
    u = np.asarray(xs, dtype=np.float64) - 0.5
    v = np.asarray(ys, dtype=np.float64) - 0.5
    u, v = np.broadcast_arrays(u, v)

    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = u - x0
    fy = v - y0

    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)

    fx = fx[..., None]
    fy = fy[..., None]
    top = image[y0c, x0c] * (1 - fx) + image[y0c, x1c] * fx
    bot = image[y1c, x0c] * (1 - fx) + image[y1c, x1c] * fx
    return (top * (1 - fy) + bot * fy).astype(image.dtype, copy=False)


def sample_region(
    image: np.ndarray,
    x0: float,
    y0: float,
    x1: float,
    y1: float,
    out_h: int,
    out_w: int,
) -> np.ndarray:
    """Resample the continuous region [x0, x1] x [y0, y1] onto an (out_h, out_w) grid."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError("output size must be positive")
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"empty sampling region ({x0}, {y0}, {x1}, {y1})")
    xs = x0 + (np.arange(out_w) + 0.5) * (x1 - x0) / out_w
    ys = y0 + (np.arange(out_h) + 0.5) * (y1 - y0) / out_h
    return bilinear_sample(image, xs[None, :], ys[:, None])


def resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resize a full (H, W, C) image. Identity when sizes match."""
    h, w = image.shape[:2]
    if (out_h, out_w) == (h, w):
        return image.copy()
    return sample_region(image, 0.0, 0.0, float(w), float(h), out_h, out_w)
