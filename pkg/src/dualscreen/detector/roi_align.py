"""ROI-Align: exact bilinear pooling of a feature-map region to a fixed grid."""

from __future__ import annotations

import numpy as np


def roi_align(
    feature_map: np.ndarray,
    bbox: tuple[float, float, float, float],
    output_size: tuple[int, int],
    samples_per_bin: int = 2,
) -> np.ndarray:
    """Pool a (C, H, W) map over a continuous box to (C, out_h, out_w).

    The box is split into an out_h x out_w grid; each bin averages
    samples_per_bin^2 bilinear samples taken at regular sub-bin positions.
    No coordinate is ever rounded. Feature pixel (i, j) is centred at
    (j + 0.5, i + 0.5), matching the image sampling convention.
    """
    c, h, w = feature_map.shape
    x0, y0, x1, y1 = (float(v) for v in bbox)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"degenerate roi ({x0}, {y0}, {x1}, {y1})")
    if x1 <= 0 or y1 <= 0 or x0 >= w or y0 >= h:
        raise ValueError(f"roi ({x0}, {y0}, {x1}, {y1}) does not intersect the {w}x{h} map")
    if samples_per_bin < 1:
        raise ValueError("samples_per_bin must be >= 1")

    out_h, out_w = output_size
    n = samples_per_bin
    bin_w = (x1 - x0) / out_w
    bin_h = (y1 - y0) / out_h
    # sample positions: n per axis per bin, at (s + 0.5)/n of the bin extent
    sx = x0 + (np.arange(out_w)[:, None] + (np.arange(n)[None, :] + 0.5) / n) * bin_w
    sy = y0 + (np.arange(out_h)[:, None] + (np.arange(n)[None, :] + 0.5) / n) * bin_h
    xs = sx.reshape(-1)  # (out_w * n,)
    ys = sy.reshape(-1)  # (out_h * n,)

    u = xs - 0.5
    v = ys - 0.5
    ix0 = np.floor(u).astype(np.int64)
    iy0 = np.floor(v).astype(np.int64)
    fx = u - ix0
    fy = v - iy0
    ix0c = np.clip(ix0, 0, w - 1)
    ix1c = np.clip(ix0 + 1, 0, w - 1)
    iy0c = np.clip(iy0, 0, h - 1)
    iy1c = np.clip(iy0 + 1, 0, h - 1)

    # gather rows then columns: (C, out_h*n, out_w*n)
    fy_col = fy[:, None]
    fx_row = fx[None, :]
    g00 = feature_map[:, iy0c[:, None], ix0c[None, :]]
    g01 = feature_map[:, iy0c[:, None], ix1c[None, :]]
    g10 = feature_map[:, iy1c[:, None], ix0c[None, :]]
    g11 = feature_map[:, iy1c[:, None], ix1c[None, :]]
    sampled = (
        g00 * (1 - fy_col) * (1 - fx_row)
        + g01 * (1 - fy_col) * fx_row
        + g10 * fy_col * (1 - fx_row)
        + g11 * fy_col * fx_row
    )
    # average the n x n samples inside each bin
    sampled = sampled.reshape(c, out_h, n, out_w, n)
    return sampled.mean(axis=(2, 4))
