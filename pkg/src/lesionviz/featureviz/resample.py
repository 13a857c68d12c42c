"""Point sampling and resizing with nearest, bilinear and bicubic kernels.

Coordinates are pixel indices (pixel ``i`` sits at ``i``). Resizing uses
the half-pixel convention: output pixel ``i`` of ``n_out`` maps to source
coordinate ``(i + 0.5) * n_in / n_out - 0.5``.
"""
from __future__ import annotations

import numpy as np

INTERPOLATIONS = ("nearest", "bilinear", "bicubic")
CUBIC_A = -0.5


def _cubic_weights(t):
    """Keys cubic convolution weights for taps at offsets -1, 0, 1, 2."""
    a = CUBIC_A

    def near(d):
        return ((a + 2) * d - (a + 3)) * d * d + 1

    def far(d):
        return ((a * d - 5 * a) * d + 8 * a) * d - 4 * a

    return far(t + 1), near(t), near(1 - t), far(2 - t)


def sample(plane: np.ndarray, rows, cols, interpolation: str = "bilinear", mode: str = "zero"):
    """Sample ``plane`` at float coordinates.

    ``mode="zero"`` treats pixels outside the image as 0; ``mode="edge"``
    clamps to the nearest border pixel.
    """
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}, got {interpolation!r}")
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)

    def tap(ri, ci):
        if mode == "edge":
            return plane[np.clip(ri, 0, h - 1), np.clip(ci, 0, w - 1)]
        ok = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        return np.where(ok, plane[np.clip(ri, 0, h - 1), np.clip(ci, 0, w - 1)], 0.0)

    if interpolation == "nearest":
        return tap(np.floor(rows + 0.5).astype(np.int64), np.floor(cols + 0.5).astype(np.int64))
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr, fc = rows - r0, cols - c0
    if interpolation == "bilinear":
        top = tap(r0, c0) * (1 - fc) + tap(r0, c0 + 1) * fc
        bottom = tap(r0 + 1, c0) * (1 - fc) + tap(r0 + 1, c0 + 1) * fc
        return top * (1 - fr) + bottom * fr
    wr, wc = _cubic_weights(fr), _cubic_weights(fc)
    out = np.zeros(np.broadcast(rows, cols).shape)
    for i in range(4):
        for j in range(4):
            out += wr[i] * wc[j] * tap(r0 + i - 1, c0 + j - 1)
    return out


def source_coords(n_out: int, n_in: int) -> np.ndarray:
    return (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5


def resize_plane(plane: np.ndarray, size, interpolation: str = "bilinear") -> np.ndarray:
    """Resize a 2D array to ``size = (H', W')`` with edge clamping.

    Bicubic output is clipped to the input's value range (cubic kernels
    overshoot at steps).
    """
    plane = np.asarray(plane, dtype=np.float64)
    ho, wo = int(size[0]), int(size[1])
    if ho < 1 or wo < 1:
        raise ValueError(f"target size must be positive, got {size}")
    h, w = plane.shape
    if interpolation == "nearest":
        ri = np.minimum(np.floor((np.arange(ho) + 0.5) * h / ho).astype(np.int64), h - 1)
        ci = np.minimum(np.floor((np.arange(wo) + 0.5) * w / wo).astype(np.int64), w - 1)
        return plane[ri[:, None], ci[None, :]]
    rr = source_coords(ho, h)[:, None]
    cc = source_coords(wo, w)[None, :]
    out = sample(plane, rr, cc, interpolation, mode="edge")
    if interpolation == "bicubic":
        out = np.clip(out, plane.min(), plane.max())
    return out
