"""Activation maximization by regularized gradient ascent on the input image.

The maximized quantity is ``f(x) - lam * R(x)`` where ``f`` is the spatial
mean of one channel's post-ReLU activation and ``R`` is an L1 penalty. The
image starts as uniform noise, takes Adam steps, is clamped to [0, 1] after
each step, and every ``transform_every`` iterations the configured
transforms edit it in listed order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import model as M
from ..errors import ConfigError, DivergenceError
from ..training import AdamConfig, AdamState, adam_step
from .transforms import TransformSpec, apply_transform

PENALTY_TARGETS = ("input", "activation")
BASELINE_CHUNK = 50


@dataclass(frozen=True)
class VizConfig:
    layer: int = 1
    channel: int = 0
    lam: float = 10.0
    iterations: int | None = None  # 200, or 256 when transforms are scheduled
    step_size: float = 0.05
    seed: int = 0
    transform_every: int = 50
    transforms: tuple = ()
    init_range: tuple = (0.4, 0.6)
    penalty_on: str = "input"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(
            t if isinstance(t, TransformSpec) else TransformSpec(*t) for t in self.transforms))
        object.__setattr__(self, "init_range", tuple(float(v) for v in self.init_range))
        if self.iterations is None:
            object.__setattr__(self, "iterations", 256 if self.transforms else 200)
        if self.lam < 0:
            raise ConfigError(f"viz.lambda must be >= 0, got {self.lam}")
        if self.iterations < 1:
            raise ConfigError(f"viz.iterations must be >= 1, got {self.iterations}")
        if self.transform_every < 1:
            raise ConfigError(f"viz.transform_every must be >= 1, got {self.transform_every}")
        if not self.step_size > 0:
            raise ConfigError(f"viz.step_size must be > 0, got {self.step_size}")
        lo, hi = self.init_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigError(f"viz.init_range must lie in [0, 1], got {self.init_range}")
        if self.penalty_on not in PENALTY_TARGETS:
            raise ConfigError(f"viz.penalty_on must be one of {PENALTY_TARGETS}, got {self.penalty_on!r}")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.step_size, 0.0, self.adam_beta1, self.adam_beta2, self.adam_eps)


@dataclass
class VizResult:
    image: np.ndarray
    trace: np.ndarray  # [iterations, 3]: f, R, f - lam * R, evaluated before each step
    final: tuple       # (f, R, total) on the returned image
    layer: int
    channel: int
    seed: int
    config: VizConfig = field(repr=False, default=None)

    @property
    def initial(self) -> tuple:
        return tuple(float(v) for v in self.trace[0])

    def trace_table(self) -> str:
        lines = ["iteration\tf\tR\ttotal"]
        lines += [f"{i}\t{f:.17g}\t{r:.17g}\t{t:.17g}" for i, (f, r, t) in enumerate(self.trace)]
        return "\n".join(lines) + "\n"


def l1_penalty(image):
    """``mean(|x|)`` and its gradient ``sign(x) / N`` (sign(0) = 0)."""
    x = np.asarray(image, dtype=np.float64)
    return float(np.abs(x).mean()), np.sign(x) / x.size


def initial_noise(shape, init_range, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(init_range[0], init_range[1], size=shape)


def _objective(spec, params, x, layer, channels, config):
    act_weight = config.lam if config.penalty_on == "activation" else 0.0
    f, act_pen, grad = M.channel_objective_and_grad(spec, params, x, layer, channels, act_weight)
    if config.penalty_on == "input":
        per_image = x[0].size
        r = np.abs(x).reshape(len(x), -1).sum(axis=1) / per_image
        grad = grad - config.lam * np.sign(x) / per_image
    else:
        r = act_pen
    return f, r, f - config.lam * r, grad


def ascend_many(spec: M.ModelSpec, params: M.ModelParams, config: VizConfig, channels, seeds) -> list:
    """Run independent ascents on ``config.layer`` for several (channel, seed) pairs at once.

    Runs are batched through the network together; each image has its own
    Adam moments and its own random stream (seeded from its seed alone).
    """
    channels = [int(c) for c in channels]
    seeds = [int(s) for s in seeds]
    if len(channels) != len(seeds) or not channels:
        raise ValueError("channels and seeds must be non-empty and of equal length")
    M._check_target(spec, config.layer, channels)
    rngs = [np.random.default_rng(s) for s in seeds]
    x = np.stack([initial_noise(spec.input_shape, config.init_range, r) for r in rngs])
    state = AdamState.zeros([x])
    trace = np.zeros((len(channels), config.iterations, 3))
    for it in range(config.iterations):
        f, r, total, grad = _objective(spec, params, x, config.layer, channels, config)
        if not (np.isfinite(total).all() and np.isfinite(grad).all()):
            raise DivergenceError(f"non-finite objective at iteration {it}")
        trace[:, it] = np.stack([f, r, total], axis=1)
        (x,), state = adam_step([x], [-grad], state, config.adam, names=["image"])
        np.clip(x, 0.0, 1.0, out=x)
        if config.transforms and (it + 1) % config.transform_every == 0:
            for k, rng in enumerate(rngs):
                for t in config.transforms:
                    x[k] = apply_transform(t, x[k], rng)
    f, r, total, _ = _objective(spec, params, x, config.layer, channels, config)
    return [VizResult(x[k].copy(), trace[k], (float(f[k]), float(r[k]), float(total[k])),
                      config.layer, channels[k], seeds[k], config)
            for k in range(len(channels))]


def ascend(spec: M.ModelSpec, params: M.ModelParams, config: VizConfig) -> VizResult:
    return ascend_many(spec, params, config, [config.channel], [config.seed])[0]


def noise_activations(spec: M.ModelSpec, params: M.ModelParams, layer: int, samples: int = 500,
                      seed: int = 0, init_range=(0.4, 0.6)) -> np.ndarray:
    """Channel objectives ``[samples, C_layer]`` over seeded random-noise images.

    The noise follows the ascent's initial distribution.
    """
    rng = np.random.default_rng([seed, 0xBA5E])
    out = []
    for start in range(0, samples, BASELINE_CHUNK):
        n = min(BASELINE_CHUNK, samples - start)
        x = initial_noise((n,) + spec.input_shape, init_range, rng)
        post = M.forward_features(spec, params, x, upto=layer)[-1]["post"]
        out.append(post.mean(axis=(1, 2)))
    return np.concatenate(out)


def mosaic(images, ncols: int, separator: int = 2) -> np.ndarray:
    """Tile equally sized 2D images row-major with ``separator``-pixel gaps of value 0."""
    planes = [np.asarray(im, dtype=np.float64).reshape(np.shape(im)[-2:]) for im in images]
    if not planes:
        raise ValueError("mosaic needs at least one image")
    h, w = planes[0].shape
    ncols = max(1, min(ncols, len(planes)))
    nrows = -(-len(planes) // ncols)
    out = np.zeros((nrows * h + (nrows - 1) * separator, ncols * w + (ncols - 1) * separator))
    for i, p in enumerate(planes):
        r, c = divmod(i, ncols)
        out[r * (h + separator):r * (h + separator) + h, c * (w + separator):c * (w + separator) + w] = p
    return out
