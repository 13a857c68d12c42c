"""Activation maximization and the image regularizers it schedules."""
from .ascent import (VizConfig, VizResult, ascend, ascend_many, l1_penalty, mosaic,
                     noise_activations)
from .filters import sobel_energy, switching_bilateral_filter, total_variation, tv_denoise, tv_energy
from .transforms import (TransformSpec, apply_transform, jitter, random_resized_crop, resize,
                         rotate, rotate_by, shift, translate)

__all__ = [
    "VizConfig", "VizResult", "ascend", "ascend_many", "l1_penalty", "mosaic", "noise_activations",
    "sobel_energy", "switching_bilateral_filter", "total_variation", "tv_denoise", "tv_energy",
    "TransformSpec", "apply_transform", "jitter", "random_resized_crop", "resize", "rotate",
    "rotate_by", "shift", "translate",
]
