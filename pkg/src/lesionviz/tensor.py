"""Layer primitives with hand-written forward and backward passes.

Tensors are plain ``numpy.ndarray`` objects in float64. Spatial layers take
either a single image ``[C, H, W]`` or a batch ``[N, C, H, W]``; the batch
axis is carried through untouched.

Convolution is cross-correlation (no kernel flip) implemented with im2col
and a single matrix product per call. The ``*_cols`` / ``*_nhwc`` helpers
work channels-last (``[N, H, W, C]``) so the gather and scatter-add run over
contiguous channel vectors; the model uses those directly.
"""
from __future__ import annotations

from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

KERNEL = 3


class LayerGrads(NamedTuple):
    grad_input: np.ndarray
    grad_weights: Optional[np.ndarray] = None
    grad_bias: Optional[np.ndarray] = None


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected [C,H,W] or [N,C,H,W] input, got shape {x.shape}")


def _check_conv(x: np.ndarray, weights: np.ndarray, padding: int) -> None:
    if weights.ndim != 4 or weights.shape[2:] != (KERNEL, KERNEL):
        raise ShapeError(f"conv weights must be [C_out, C_in, 3, 3], got {weights.shape}")
    if x.shape[1] != weights.shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but weights expect {weights.shape[1]} "
            f"(input {x.shape}, weights {weights.shape})"
        )
    if padding not in (0, 1):
        raise ShapeError(f"padding must be 0 or 1, got {padding}")
    if x.shape[2] + 2 * padding < KERNEL or x.shape[3] + 2 * padding < KERNEL:
        raise ShapeError(f"input {x.shape} too small for a 3x3 kernel with padding {padding}")


def im2col(x: np.ndarray, padding: int) -> np.ndarray:
    """Unfold channels-last ``[N, H, W, C]`` into rows of ``9*C`` values ordered (ki, kj, c)."""
    n, h, w, c = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    ho, wo = h + 2 * padding - 2, w + 2 * padding - 2
    win = sliding_window_view(x, (KERNEL, KERNEL), axis=(1, 2))
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, KERNEL * KERNEL * c)


def col2im(dcols: np.ndarray, shape: tuple, padding: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add column gradients back to ``[N, H, W, C]``."""
    n, h, w, c = shape
    ho, wo = h + 2 * padding - 2, w + 2 * padding - 2
    d = dcols.reshape(n, ho, wo, KERNEL, KERNEL, c)
    out = np.zeros((n, h + 2 * padding, w + 2 * padding, c))
    for i in range(KERNEL):
        for j in range(KERNEL):
            out[:, i:i + ho, j:j + wo, :] += d[:, :, :, i, j, :]
    if padding:
        out = out[:, padding:-padding, padding:-padding, :]
    return out


def weight_matrix(weights: np.ndarray) -> np.ndarray:
    """``[C_out, C_in, 3, 3]`` weights as a ``[9*C_in, C_out]`` matrix matching :func:`im2col`."""
    return weights.transpose(2, 3, 1, 0).reshape(-1, weights.shape[0])


def conv_forward_cols(x, weights, bias, padding):
    """Channels-last convolution; also returns the unfolded input for reuse in backward."""
    n, h, w, _ = x.shape
    ho, wo = h + 2 * padding - 2, w + 2 * padding - 2
    cols = im2col(x, padding)
    out = cols @ weight_matrix(weights)
    out += bias
    return out.reshape(n, ho, wo, weights.shape[0]), cols


def conv_backward_cols(cols, x_shape, weights, grad_output, padding, need_params=True, need_input=True):
    """Channels-last adjoint of :func:`conv_forward_cols`."""
    cout = weights.shape[0]
    g2 = grad_output.reshape(-1, cout)
    wmat = weight_matrix(weights)
    grad_w = grad_b = None
    if need_params:
        grad_w = (cols.T @ g2).reshape(KERNEL, KERNEL, -1, cout).transpose(3, 2, 0, 1)
        grad_b = g2.sum(axis=0)
    grad_in = col2im(g2 @ wmat.T, x_shape, padding) if need_input else None
    return LayerGrads(grad_in, grad_w, grad_b)


def _nhwc(x):
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1))


def _nchw(x):
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def conv2d_forward(input: np.ndarray, weights: np.ndarray, bias: np.ndarray,
                   padding: int = 1) -> np.ndarray:
    x, single = _as_batch(input)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_conv(x, weights, padding)
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} does not match {weights.shape[0]} output channels")
    out, _ = conv_forward_cols(_nhwc(x), weights, bias, padding)
    out = _nchw(out)
    return out[0] if single else out


def conv2d_backward(input: np.ndarray, weights: np.ndarray, grad_output: np.ndarray,
                    padding: int = 1) -> LayerGrads:
    """Gradients of ``sum(grad_output * conv2d_forward(input))``."""
    x, single = _as_batch(input)
    weights = np.asarray(weights, dtype=np.float64)
    _check_conv(x, weights, padding)
    g, _ = _as_batch(grad_output)
    expected = (x.shape[0], weights.shape[0], x.shape[2] + 2 * padding - 2, x.shape[3] + 2 * padding - 2)
    if g.shape != expected:
        raise ShapeError(f"grad_output shape {g.shape[1:] if single else g.shape} does not match "
                         f"forward output {expected[1:] if single else expected}")
    xl = _nhwc(x)
    grads = conv_backward_cols(im2col(xl, padding), xl.shape, weights, _nhwc(g), padding)
    gi = _nchw(grads.grad_input)
    return LayerGrads(gi[0] if single else gi, grads.grad_weights, grads.grad_bias)


def relu(input: np.ndarray) -> np.ndarray:
    return np.maximum(input, 0.0)


def relu_backward(input: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return grad_output * (np.asarray(input) > 0)


def pool_forward_nhwc(x: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Max pool over axes 1, 2 of ``[N, H, W, C]``; indices are flat offsets into ``x``."""
    n, h, w, c = x.shape
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if kernel < 1 or kernel > h or kernel > w:
        raise ShapeError(f"pool kernel {kernel} larger than input extent {(h, w)}")
    ho, wo = (h - kernel) // stride + 1, (w - kernel) // stride + 1
    # Separable scan: first maximum along each window row, then the first row
    # holding the overall maximum. Strict ">" gives row-major first-max ties.
    # Masked updates use integer arithmetic; copyto(where=) is much slower.
    span_w = stride * (wo - 1) + 1
    rowmax = x[:, :, :span_w:stride, :].copy()
    colarg = np.zeros(rowmax.shape, dtype=np.int8)
    for dj in range(1, kernel):
        v = x[:, :, dj:dj + span_w:stride, :]
        better = (v > rowmax).view(np.int8)
        colarg += better * (np.int8(dj) - colarg)
        np.maximum(rowmax, v, out=rowmax)
    span_h = stride * (ho - 1) + 1
    out = rowmax[:, :span_h:stride].copy()
    best_col = colarg[:, :span_h:stride].copy()
    best_row = np.zeros(out.shape, dtype=np.int8)
    for di in range(1, kernel):
        v = rowmax[:, di:di + span_h:stride]
        better = (v > out).view(np.int8)
        best_row += better * (np.int8(di) - best_row)
        best_col += better * (colarg[:, di:di + span_h:stride] - best_col)
        np.maximum(out, v, out=out)
    rows = np.arange(ho).reshape(1, ho, 1, 1) * stride + best_row
    cols = np.arange(wo).reshape(1, 1, wo, 1) * stride + best_col
    idx = ((np.arange(n).reshape(n, 1, 1, 1) * h + rows) * w + cols) * c + np.arange(c)
    return out, idx


def maxpool2d_forward(input: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Max pooling without padding over the last two axes.

    Returns the pooled tensor and, per output cell, the flat index into
    ``input`` of the first maximal element in row-major window order.
    """
    x = np.asarray(input, dtype=np.float64)
    if x.ndim < 2:
        raise ShapeError(f"maxpool needs at least 2 dims, got {x.shape}")
    lead, (h, w) = x.shape[:-2], x.shape[-2:]
    out, idx = pool_forward_nhwc(x.reshape(-1, h, w, 1), kernel, stride)
    return out.reshape(lead + out.shape[1:3]), idx.reshape(lead + out.shape[1:3])


def maxpool2d_backward(argmax_index_map: np.ndarray, grad_output: np.ndarray,
                       input_shape: tuple) -> np.ndarray:
    size = int(np.prod(input_shape, dtype=np.int64))
    grad = np.bincount(np.ravel(argmax_index_map), weights=np.ravel(grad_output), minlength=size)
    return grad.reshape(input_shape)


def _check_dense(x, weights, bias=None):
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1]:
        raise ShapeError(f"dense input {x.shape} incompatible with weights {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ShapeError(f"dense bias {bias.shape} incompatible with weights {weights.shape}")


def dense_forward(input: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(input, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_dense(x, weights, bias)
    return x @ weights.T + bias


def dense_backward(input: np.ndarray, weights: np.ndarray, grad_output: np.ndarray) -> LayerGrads:
    x = np.asarray(input, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    g = np.asarray(grad_output, dtype=np.float64)
    _check_dense(x, weights)
    if g.shape != x.shape[:-1] + (weights.shape[0],):
        raise ShapeError(f"dense grad_output {g.shape} does not match output shape")
    xb, gb = np.atleast_2d(x), np.atleast_2d(g)
    return LayerGrads(g @ weights, gb.T @ xb, gb.sum(axis=0))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_with_logits(logit, label):
    """Binary cross-entropy on a raw logit.

    Works elementwise on arrays. Returns ``(loss, d loss / d logit)``.
    """
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    m = -(2.0 * y - 1.0) * z
    loss = np.maximum(m, 0.0) + np.log1p(np.exp(-np.abs(m)))
    grad = sigmoid(z) - y
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function, one element at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f(x)
        flat[i] = old - eps
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad
