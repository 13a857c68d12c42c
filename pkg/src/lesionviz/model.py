"""Five-layer VGG-style classifier: conv/ReLU blocks, three max pools, one logit.

Layer ``k`` (1-indexed) is ``conv_k -> ReLU`` followed by a max pool when
``k`` is listed in ``pool_after``. Channel objectives read the post-ReLU
output of a conv layer, before its pool.

Activations are kept channels-last (``[N, H, W, C]``) internally; the head
flattens in that order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ShapeError


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple = (1, 64, 64)
    conv_filters: tuple = (8, 16, 32, 64, 64)
    conv_kernel: int = 3
    conv_padding: int = 1
    pool_after: tuple = (1, 2, 5)
    pool_kernels: tuple = (3, 3, 4)
    pool_strides: tuple = (1, 2, 2)

    def __post_init__(self):
        for name in ("input_shape", "conv_filters", "pool_after", "pool_kernels", "pool_strides"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    @property
    def num_layers(self) -> int:
        return len(self.conv_filters)

    def validate(self) -> None:
        if len(self.input_shape) != 3 or self.input_shape[0] != 1:
            raise ShapeError(f"input_shape must be (1, H, W), got {self.input_shape}")
        if len(self.conv_filters) != 5 or min(self.conv_filters) < 1:
            raise ShapeError(f"conv_filters must list 5 positive counts, got {self.conv_filters}")
        if self.conv_kernel != 3:
            raise ShapeError("only 3x3 convolution kernels are supported")
        if not (len(self.pool_after) == len(self.pool_kernels) == len(self.pool_strides)):
            raise ShapeError("pool_after, pool_kernels and pool_strides must have equal length")
        if any(not 1 <= k <= 5 for k in self.pool_after) or len(set(self.pool_after)) != len(self.pool_after):
            raise ShapeError(f"pool_after must name distinct layers in 1..5, got {self.pool_after}")
        self.layer_shapes()

    def pool_for(self, layer: int):
        """``(kernel, stride)`` of the pool following ``layer``, or ``None``."""
        if layer in self.pool_after:
            i = self.pool_after.index(layer)
            return self.pool_kernels[i], self.pool_strides[i]
        return None

    def layer_shapes(self) -> list:
        """Shape chain as ``(name, (C, H, W))`` pairs, validating every extent."""
        c, h, w = self.input_shape
        shapes = [("input", (c, h, w))]
        for k, filters in enumerate(self.conv_filters, start=1):
            h, w = h + 2 * self.conv_padding - 2, w + 2 * self.conv_padding - 2
            if h < 1 or w < 1:
                raise ShapeError(f"input {self.input_shape[1:]} too small: conv{k} output would be {(h, w)}")
            c = filters
            shapes.append((f"conv{k}", (c, h, w)))
            pool = self.pool_for(k)
            if pool:
                kern, stride = pool
                if kern > h or kern > w:
                    raise ShapeError(
                        f"input {self.input_shape[1:]} too small: pooling chain exhausts spatial "
                        f"extent at pool after conv{k} (kernel {kern} > extent {(h, w)})"
                    )
                h, w = (h - kern) // stride + 1, (w - kern) // stride + 1
                shapes.append((f"pool{k}", (c, h, w)))
        return shapes

    @property
    def head_inputs(self) -> int:
        return int(np.prod(self.layer_shapes()[-1][1]))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class ModelParams:
    conv_weights: list = field(default_factory=list)
    conv_biases: list = field(default_factory=list)
    head_weight: np.ndarray = None
    head_bias: np.ndarray = None

    def named_tensors(self) -> list:
        """All tensors in declaration order, as ``(name, array)``."""
        out = []
        for k, (w, b) in enumerate(zip(self.conv_weights, self.conv_biases), start=1):
            out += [(f"conv{k}.weight", w), (f"conv{k}.bias", b)]
        out += [("head.weight", self.head_weight), ("head.bias", self.head_bias)]
        return out

    @classmethod
    def from_tensors(cls, tensors: list) -> "ModelParams":
        arrays = [np.asarray(a, dtype=np.float64) for a in tensors]
        return cls(arrays[0:-2:2], arrays[1:-2:2], arrays[-2], arrays[-1])

    def copy(self) -> "ModelParams":
        return ModelParams.from_tensors([a.copy() for _, a in self.named_tensors()])

    @staticmethod
    def expected_shapes(spec: ModelSpec) -> list:
        shapes, cin = [], spec.input_shape[0]
        for cout in spec.conv_filters:
            shapes += [(cout, cin, 3, 3), (cout,)]
            cin = cout
        return shapes + [(1, spec.head_inputs), (1,)]


def build(spec: ModelSpec, seed: int) -> ModelParams:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    tensors = []
    for shape in ModelParams.expected_shapes(spec):
        if len(shape) == 1:
            tensors.append(np.zeros(shape))
        else:
            fan_in = int(np.prod(shape[1:]))
            tensors.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))
    return ModelParams.from_tensors(tensors)


def check_params(spec: ModelSpec, params: ModelParams) -> None:
    expected = ModelParams.expected_shapes(spec)
    got = [a.shape for _, a in params.named_tensors()]
    if [tuple(s) for s in expected] != [tuple(s) for s in got]:
        raise ShapeError(f"parameter shapes {got} do not match spec {expected}")


def _image_batch(spec: ModelSpec, image) -> tuple:
    x = np.asarray(image, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != spec.input_shape:
        raise ShapeError(f"image shape {np.shape(image)} does not match model input {spec.input_shape}")
    return x, single


def forward_features(spec: ModelSpec, params: ModelParams, x: np.ndarray, upto: int = 5) -> list:
    """Run conv layers ``1..upto`` on a batch and keep what backward needs."""
    cache = []
    h = x.reshape(x.shape[0], x.shape[2], x.shape[3], 1)
    for k in range(1, upto + 1):
        pre, cols = T.conv_forward_cols(h, params.conv_weights[k - 1], params.conv_biases[k - 1],
                                        spec.conv_padding)
        post = T.relu(pre)
        entry = {"in_shape": h.shape, "cols": cols, "pre": pre, "post": post, "out": post}
        pool = spec.pool_for(k)
        if pool:
            entry["out"], entry["argmax"] = T.pool_forward_nhwc(post, *pool)
        cache.append(entry)
        h = entry["out"]
    return cache


def backward_features(spec: ModelSpec, params: ModelParams, cache: list, grad_post: np.ndarray,
                      need_params: bool = True, need_image: bool = True):
    """Backpropagate a gradient on layer ``len(cache)``'s post-ReLU output.

    Returns ``(grad_image, conv_grads)`` with ``conv_grads`` a list of
    ``(grad_w, grad_b)`` per layer (``None`` entries when not requested).
    """
    conv_grads = [None] * len(cache)
    g = grad_post
    for k in range(len(cache), 0, -1):
        entry = cache[k - 1]
        if k < len(cache) and spec.pool_for(k):
            g = T.maxpool2d_backward(entry["argmax"], g, entry["post"].shape)
        g = T.relu_backward(entry["pre"], g)
        grads = T.conv_backward_cols(entry["cols"], entry["in_shape"], params.conv_weights[k - 1], g,
                                     spec.conv_padding, need_params=need_params,
                                     need_input=need_image or k > 1)
        conv_grads[k - 1] = (grads.grad_weights, grads.grad_bias)
        g = grads.grad_input
    if g is None:
        return None, conv_grads
    n, h, w, _ = g.shape
    return g.reshape(n, 1, h, w), conv_grads


def forward_logit(spec: ModelSpec, params: ModelParams, image):
    """Pre-sigmoid logit for ``[1,H,W]`` (scalar) or ``[N,1,H,W]`` (vector), plus the cache."""
    x, single = _image_batch(spec, image)
    cache = forward_features(spec, params, x)
    flat = cache[-1]["out"].reshape(x.shape[0], -1)
    logits = T.dense_forward(flat, params.head_weight, params.head_bias)[:, 0]
    cache.append({"flat": flat})
    return (float(logits[0]) if single else logits), cache


def backward_logit(spec: ModelSpec, params: ModelParams, cache: list, grad_logit,
                   need_image: bool = True) -> tuple:
    """Parameter gradients (as a :class:`ModelParams`) and the image gradient.

    Training passes ``need_image=False`` to skip the unused input adjoint.
    """
    flat = cache[-1]["flat"]
    g = np.asarray(grad_logit, dtype=np.float64).reshape(flat.shape[0], 1)
    head = T.dense_backward(flat, params.head_weight, g)
    feats = cache[:-1]
    last = feats[-1]
    g_out = head.grad_input.reshape(last["out"].shape)
    pool = spec.pool_for(len(feats))
    if pool:
        g_out = T.maxpool2d_backward(last["argmax"], g_out, last["post"].shape)
    grad_image, conv_grads = backward_features(spec, params, feats, g_out, need_image=need_image)
    grads = ModelParams([w for w, _ in conv_grads], [b for _, b in conv_grads],
                        head.grad_weights, head.grad_bias)
    return grads, grad_image


def _check_target(spec: ModelSpec, layer: int, channel) -> None:
    if not 1 <= int(layer) <= spec.num_layers:
        raise ShapeError(f"layer {layer} out of range: valid layers are 1..{spec.num_layers}")
    n = spec.conv_filters[int(layer) - 1]
    for c in np.atleast_1d(channel):
        if not 0 <= int(c) < n:
            raise ShapeError(f"channel {c} out of range for layer {layer}: valid channels are 0..{n - 1}")


def forward_to_channel(spec: ModelSpec, params: ModelParams, image, layer: int, channel: int):
    """Post-ReLU activation map of one channel and its spatial mean."""
    _check_target(spec, layer, channel)
    x, single = _image_batch(spec, image)
    post = forward_features(spec, params, x, upto=layer)[-1]["post"][..., channel]
    obj = post.mean(axis=(-2, -1))
    if single:
        return post[0], float(obj[0])
    return post, obj


def channel_objective_and_grad(spec: ModelSpec, params: ModelParams, images, layer: int, channels,
                               activation_l1: float = 0.0):
    """Channel objective and its gradient w.r.t. a batch of images.

    ``images`` is ``[N,1,H,W]`` and ``channels`` gives one target channel per
    image. With ``activation_l1 > 0`` the returned objective is
    ``mean_channel - activation_l1 * mean(|layer activation|)`` and the
    gradient matches; the pure channel mean is returned alongside.
    """
    _check_target(spec, layer, channels)
    x, single = _image_batch(spec, images)
    channels = np.broadcast_to(np.atleast_1d(channels), (x.shape[0],))
    cache = forward_features(spec, params, x, upto=layer)
    post = cache[-1]["post"]
    idx = np.arange(x.shape[0])
    hw = post.shape[1] * post.shape[2]
    f = post[idx, :, :, channels].sum(axis=(-2, -1)) / hw
    g = np.zeros_like(post)
    g[idx, :, :, channels] = 1.0 / hw
    act_pen = np.zeros(x.shape[0])
    if activation_l1:
        per_image = post[0].size
        act_pen = np.abs(post).reshape(x.shape[0], -1).sum(axis=1) / per_image
        g -= activation_l1 * np.sign(post) / per_image
    grad, _ = backward_features(spec, params, cache, g, need_params=False)
    return f, act_pen, grad
