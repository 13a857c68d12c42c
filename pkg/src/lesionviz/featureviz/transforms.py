"""Spatial and intensity transforms applied to the image during ascent.

Each transform takes a 2D ``[H, W]`` or ``[1, H, W]`` image in [0, 1] and
returns a new array of the same shape (``resize`` aside). Random ones draw
from the ``numpy.random.Generator`` they are given.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .filters import switching_bilateral_filter, tv_denoise
from .resample import INTERPOLATIONS, resize_plane, sample

CROP_ATTEMPTS = 10


def _split(image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0], lambda p: p[None]
    if img.ndim == 2:
        return img, lambda p: p
    raise ValueError(f"expected a [H, W] or [1, H, W] image, got shape {img.shape}")


def jitter(image, brightness_range, rng: np.random.Generator):
    """Multiply brightness by a factor drawn from ``brightness_range``, clip to [0, 1]."""
    lo, hi = brightness_range
    if not 0 <= lo <= hi:
        raise ValueError(f"brightness range must satisfy 0 <= lo <= hi, got {brightness_range}")
    factor = rng.uniform(lo, hi)
    return np.clip(factor * np.asarray(image, dtype=np.float64), 0.0, 1.0)


def rotate_by(image, degrees: float, interpolation: str = "bilinear"):
    """Rotate counter-clockwise (as displayed, row 0 on top) about the image center; zero fill."""
    plane, wrap = _split(image)
    if degrees == 0:
        return wrap(plane.copy())
    h, w = plane.shape
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    t = np.deg2rad(degrees)
    ct, st = np.cos(t), np.sin(t)
    dr = np.arange(h)[:, None] - cr
    dc = np.arange(w)[None, :] - cc
    out = sample(plane, cr + ct * dr + st * dc, cc - st * dr + ct * dc, interpolation, mode="zero")
    if interpolation == "bicubic":
        out = np.clip(out, min(plane.min(), 0.0), plane.max())
    return wrap(out)


def rotate(image, max_degrees: float, interpolation: str, rng: np.random.Generator):
    if max_degrees < 0:
        raise ValueError(f"max_degrees must be >= 0, got {max_degrees}")
    return rotate_by(image, rng.uniform(-max_degrees, max_degrees), interpolation)


def shift(image, dr: int, dc: int):
    """Integer translation by ``(dr, dc)`` pixels with zero fill."""
    plane, wrap = _split(image)
    h, w = plane.shape
    out = np.zeros_like(plane)
    if abs(dr) < h and abs(dc) < w:
        out[max(dr, 0):h + min(dr, 0), max(dc, 0):w + min(dc, 0)] = \
            plane[max(-dr, 0):h + min(-dr, 0), max(-dc, 0):w + min(-dc, 0)]
    return wrap(out)


def translate(image, max_shift: int, rng: np.random.Generator):
    if max_shift < 0:
        raise ValueError(f"max_shift must be >= 0, got {max_shift}")
    dr, dc = rng.integers(-max_shift, max_shift + 1, size=2)
    return shift(image, int(dr), int(dc))


def resize(image, target, interpolation: str = "bilinear"):
    """Resample to ``target = (H', W')``; the result has the new size."""
    plane, wrap = _split(image)
    return wrap(resize_plane(plane, target, interpolation))


def fit_to(plane: np.ndarray, size) -> np.ndarray:
    """Center-crop or zero-pad a 2D array to ``size``."""
    h, w = size
    out = np.zeros((h, w))
    ph, pw = plane.shape
    sh, sw = min(h, ph), min(w, pw)
    r_src, c_src = (ph - sh) // 2, (pw - sw) // 2
    r_dst, c_dst = (h - sh) // 2, (w - sw) // 2
    out[r_dst:r_dst + sh, c_dst:c_dst + sw] = plane[r_src:r_src + sh, c_src:c_src + sw]
    return out


def resize_in_place(image, target, interpolation: str = "bilinear"):
    """Resize to ``target`` then center-crop / zero-pad back to the original extent."""
    plane, wrap = _split(image)
    return wrap(fit_to(resize_plane(plane, target, interpolation), plane.shape))


def crop_window(shape, scale_range, ratio_range, rng: np.random.Generator) -> tuple:
    """``(top, left, height, width)`` of a random crop; center-crop fallback after 10 misses."""
    h, w = shape
    area = h * w
    for _ in range(CROP_ATTEMPTS):
        target = area * rng.uniform(*scale_range)
        ratio = rng.uniform(*ratio_range)
        cw = int(round(np.sqrt(target * ratio)))
        ch = int(round(np.sqrt(target / ratio)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return top, left, ch, cw
    s = np.sqrt(0.5 * (scale_range[0] + scale_range[1]))
    ch, cw = max(1, min(h, int(round(h * s)))), max(1, min(w, int(round(w * s))))
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def random_resized_crop(image, scale_range, ratio_range, interpolation: str, rng: np.random.Generator):
    lo, hi = scale_range
    if not 0 < lo <= hi <= 1:
        raise ValueError(f"scale range must satisfy 0 < min <= max <= 1, got {scale_range}")
    if not 0 < ratio_range[0] <= ratio_range[1]:
        raise ValueError(f"ratio range must be positive and ordered, got {ratio_range}")
    plane, wrap = _split(image)
    top, left, ch, cw = crop_window(plane.shape, scale_range, ratio_range, rng)
    return wrap(resize_plane(plane[top:top + ch, left:left + cw], plane.shape, interpolation))


KINDS = ("jitter", "rotation", "translation", "resize", "random_resized_crop", "sbf", "tv_denoise")

DEFAULTS = {
    "jitter": {"brightness_range": (0.8, 1.2)},
    "rotation": {"max_degrees": 15.0, "interpolation": "bilinear"},
    "translation": {"max_shift": 4},
    "resize": {"size": None, "scale": 1.2, "interpolation": "bilinear"},
    "random_resized_crop": {"scale_range": (0.5, 1.0), "ratio_range": (0.75, 4 / 3),
                            "interpolation": "bilinear"},
    "sbf": {"window": 5, "sigma_s": 1.5, "sigma_r": 0.15, "threshold": 0.25},
    "tv_denoise": {"weight": 0.1, "steps": 10},
}


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown transform {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown {self.kind} parameter(s): {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        self._validate(merged)

    def _validate(self, p):
        k = self.kind
        bad = None
        if "interpolation" in p and p["interpolation"] not in INTERPOLATIONS:
            bad = f"interpolation must be one of {INTERPOLATIONS}"
        elif k == "jitter" and not 0 <= p["brightness_range"][0] <= p["brightness_range"][1]:
            bad = "brightness_range must satisfy 0 <= lo <= hi"
        elif k == "rotation" and p["max_degrees"] < 0:
            bad = "max_degrees must be >= 0"
        elif k == "translation" and (int(p["max_shift"]) != p["max_shift"] or p["max_shift"] < 0):
            bad = "max_shift must be a non-negative integer"
        elif k == "resize" and p["size"] is None and not p["scale"] > 0:
            bad = "scale must be > 0"
        elif k == "resize" and p["size"] is not None and min(p["size"]) < 1:
            bad = "size must be positive"
        elif k == "random_resized_crop" and not 0 < p["scale_range"][0] <= p["scale_range"][1] <= 1:
            bad = "scale_range must satisfy 0 < min <= max <= 1"
        elif k == "random_resized_crop" and not 0 < p["ratio_range"][0] <= p["ratio_range"][1]:
            bad = "ratio_range must be positive and ordered"
        elif k == "sbf" and (p["window"] < 3 or p["window"] % 2 == 0):
            bad = "window must be an odd integer >= 3"
        elif k == "sbf" and (p["sigma_s"] <= 0 or p["sigma_r"] <= 0 or p["threshold"] < 0):
            bad = "sigmas must be > 0 and threshold >= 0"
        elif k == "tv_denoise" and (p["weight"] <= 0 or p["steps"] < 1):
            bad = "weight must be > 0 and steps >= 1"
        if bad:
            raise ConfigError(f"{k}: {bad} (got {p})")


def apply_transform(spec: TransformSpec, image, rng: np.random.Generator):
    """Apply one scheduled transform; the result keeps the input's shape."""
    p = spec.params
    if spec.kind == "jitter":
        return jitter(image, p["brightness_range"], rng)
    if spec.kind == "rotation":
        return rotate(image, p["max_degrees"], p["interpolation"], rng)
    if spec.kind == "translation":
        return translate(image, int(p["max_shift"]), rng)
    if spec.kind == "resize":
        plane, _ = _split(image)
        size = p["size"] or (max(1, int(round(plane.shape[0] * p["scale"]))),
                             max(1, int(round(plane.shape[1] * p["scale"]))))
        return resize_in_place(image, size, p["interpolation"])
    if spec.kind == "random_resized_crop":
        return random_resized_crop(image, p["scale_range"], p["ratio_range"], p["interpolation"], rng)
    if spec.kind == "sbf":
        return switching_bilateral_filter(image, p["window"], p["sigma_s"], p["sigma_r"], p["threshold"])
    return tv_denoise(image, p["weight"], int(p["steps"]))
