"""
Differentiable layers: convolution, activations, pooling and the affine head.

Each function takes and returns :class:`Tensor` objects and attaches a
vector-Jacobian product, so gradients reach parameters and the input image
alike.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.autodiff.tensor import Tensor, lift
from app.core.errors import ShapeMismatchError


def conv2d(
    input: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation of a BCHW input with an OCkk kernel.

    Output extents are ``(H + 2p - k) // s + 1`` per spatial axis.
    """
    if stride < 1 or padding < 0:
        raise ShapeMismatchError(f"conv2d: invalid stride={stride} / padding={padding}")
    if input.ndim != 4 or kernel.ndim != 4:
        raise ShapeMismatchError(f"conv2d: expected BCHW input and OCkk kernel, got {input.shape} and {kernel.shape}")
    batch, channels, height, width = input.shape
    out_channels, kernel_channels, kh, kw = kernel.shape
    if channels != kernel_channels:
        raise ShapeMismatchError(
            f"conv2d: input {input.shape} has {channels} channels but kernel {kernel.shape} expects {kernel_channels}"
        )
    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeMismatchError(f"conv2d: kernel {kernel.shape} does not fit input {input.shape} with padding {padding}")
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeMismatchError(f"conv2d: bias {bias.shape} does not match kernel {kernel.shape}")

    x = input.data
    w = kernel.data
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # (B, C, Hp-kh+1, Wp-kw+1, kh, kw) -> strided output positions
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        grad_kernel = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_padded = np.zeros(padded.shape)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
                ] += np.einsum("bohw,oc->bchw", g, w[:, :, i, j])
        grad_input = grad_padded[:, :, padding : padding + height, padding : padding + width]
        grads: Tuple[np.ndarray, ...] = (grad_input, grad_kernel)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads

    parents = (input, kernel) if bias is None else (input, kernel, bias)
    return Tensor(out, "conv2d", parents, vjp)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the backward pass uses subgradient 0 at exactly 0."""
    data = x.data
    return Tensor(np.where(data > 0, data, 0.0), "relu", (x,), lambda g: (g * (data > 0),))


def absolute(x: Tensor) -> Tensor:
    """|x|; subgradient 0 at exactly 0."""
    data = x.data
    return Tensor(np.abs(data), "abs", (x,), lambda g: (g * np.sign(data),))


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping average downsample; trailing rows/cols that do not fill a window are dropped."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"avg_pool2d: expected BCHW, got {x.shape}")
    batch, channels, height, width = x.shape
    out_h, out_w = height // size, width // size
    if out_h < 1 or out_w < 1:
        raise ShapeMismatchError(f"avg_pool2d: window {size} larger than input {x.shape}")
    cropped = x.data[:, :, : out_h * size, : out_w * size]
    out = cropped.reshape(batch, channels, out_h, size, out_w, size).mean(axis=(3, 5))
    shape = x.shape

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(shape)
        spread = np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size)
        full[:, :, : out_h * size, : out_w * size] = spread
        return (full,)

    return Tensor(out, "avg_pool2d", (x,), vjp)


def gap(features: Tensor) -> Tensor:
    """Global average pooling, BCHW -> BC."""
    if features.ndim != 4 or features.shape[2] < 1 or features.shape[3] < 1:
        raise ShapeMismatchError(f"gap: expected BCHW with H, W >= 1, got {features.shape}")
    return features.mean(axis=(2, 3))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight.T + bias for x of shape (B, C) and weight (K, C)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(f"linear: input {x.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeMismatchError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        grads: Tuple[np.ndarray, ...] = (g @ wd, g.T @ xd)
        if bias is not None:
            grads = grads + (g.sum(axis=0),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor(out, "linear", parents, vjp)


def channel_dot(features: Tensor, weights: Tensor) -> Tensor:
    """Per-pixel dot product over channels: (B, C, H, W) x (C,) -> (B, H, W)."""
    if features.ndim != 4 or weights.shape != (features.shape[1],):
        raise ShapeMismatchError(f"channel_dot: features {features.shape} vs weights {weights.shape}")
    return (features * lift(weights).reshape(1, -1, 1, 1)).sum(axis=1)
