"""Numerical primitives on dense float64 arrays.

Images and activations are channel-first ``(C, H, W)``; batched variants take a
leading batch axis. Convolution is cross-correlation (no kernel flip).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, DimensionError


def as_tensor(x):
    """Return ``x`` as a contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _check_conv(x_shape, w_shape, stride, padding):
    if len(w_shape) != 4:
        raise DimensionError(f"kernels must be 4-d (C_out, C_in, kH, kW), got {w_shape}")
    c_in, h, w = x_shape[-3:]
    if w_shape[1] != c_in:
        raise DimensionError(f"input has {c_in} channels but kernels expect {w_shape[1]}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}")
    kh, kw = w_shape[2:]
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h}x{w}+2*{padding}")


def _windows(x, kh, kw, stride, padding):
    # x: (B, C, H, W) -> (B, C, H', W', kH, kW) strided view
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_batch(x, kernels, bias, stride=1, padding=0):
    """Batched cross-correlation: ``(B, C_in, H, W) -> (B, C_out, H', W')``."""
    x = as_tensor(x)
    _check_conv(x.shape, kernels.shape, stride, padding)
    kh, kw = kernels.shape[2:]
    win = _windows(x, kh, kw, stride, padding)
    out = np.einsum("bchwij,ocij->bohw", win, kernels, optimize=True)
    return out + np.asarray(bias, dtype=np.float64)[None, :, None, None]


def conv2d(input, kernels, bias, stride=1, padding=0):
    input = as_tensor(input)
    if input.ndim != 3:
        raise DimensionError(f"conv2d expects (C, H, W) input, got shape {input.shape}")
    return conv2d_batch(input[None], as_tensor(kernels), bias, stride, padding)[0]


def conv2d_backward(x, kernels, grad_out, stride=1, padding=0):
    """Gradients of a batched conv w.r.t. input, kernels and bias."""
    kh, kw = kernels.shape[2:]
    win = _windows(x, kh, kw, stride, padding)
    grad_w = np.einsum("bchwij,bohw->ocij", win, grad_out, optimize=True)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_x = conv2d_transpose(grad_out, kernels, x.shape, stride, padding)
    return grad_x, grad_w, grad_b


def conv2d_transpose(y, kernels, x_shape, stride=1, padding=0):
    """Adjoint of the bias-free conv: scatters ``(B, C_out, H', W')`` back onto ``x_shape``."""
    b, c_in, h, w = x_shape
    kh, kw = kernels.shape[2:]
    ho, wo = y.shape[2:]
    padded = np.zeros((b, c_in, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            contrib = np.einsum("bohw,oc->bchw", y, kernels[:, :, i, j], optimize=True)
            padded[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib
    if padding:
        padded = padded[:, :, padding:padding + h, padding:padding + w]
    return padded


def maxpool2d_batch(x, window, stride):
    """Batched max pooling.

    Returns the pooled array and, for every output element, the flat index of
    the winning element inside its own ``(H, W)`` input plane. Ties go to the
    first element in row-major window order.
    """
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if window < 1 or stride < 1 or window > h or window > w:
        raise DimensionError(f"pool window {window} does not fit spatial extent {h}x{w}")
    win = _windows(x, window, window, stride, 0)
    b, c, ho, wo = win.shape[:4]
    flat = win.reshape(b, c, ho, wo, window * window)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    rows = np.arange(ho)[:, None] * stride + local // window
    cols = np.arange(wo)[None, :] * stride + local % window
    return out, rows * w + cols


def maxpool2d(input, window, stride):
    """Max pooling of a ``(C, H, W)`` tensor.

    Returns ``(output, index_map)`` where ``index_map[c, i, j]`` is the flat
    row-major index into ``input`` (over all of C, H, W) of the maximum.
    """
    input = as_tensor(input)
    if input.ndim != 3:
        raise DimensionError(f"maxpool2d expects (C, H, W) input, got shape {input.shape}")
    out, plane_idx = maxpool2d_batch(input[None], window, stride)
    c, h, w = input.shape
    offsets = (np.arange(c) * h * w)[:, None, None]
    return out[0], plane_idx[0] + offsets


def unpool(values, plane_idx, x_shape):
    """Route pooled ``values`` back to the argmax positions recorded by ``maxpool2d_batch``."""
    b, c, h, w = x_shape
    out = np.zeros((b, c, h * w))
    np.add.at(
        out,
        (np.arange(b)[:, None, None, None], np.arange(c)[None, :, None, None], plane_idx),
        values,
    )
    return out.reshape(x_shape)


def linear(input, weights, bias):
    input = as_tensor(input)
    weights = as_tensor(weights)
    if input.ndim != 1 or weights.ndim != 2 or weights.shape[1] != input.shape[0]:
        raise DimensionError(f"cannot apply {weights.shape} weights to input {input.shape}")
    if len(bias) != weights.shape[0]:
        raise DimensionError(f"bias length {len(bias)} != {weights.shape[0]} outputs")
    return weights @ input + as_tensor(bias)


def relu(input):
    return np.maximum(as_tensor(input), 0.0)


def softmax(input, axis=-1):
    x = as_tensor(input)
    if x.shape[axis] < 1:
        raise DimensionError("softmax of an empty vector")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(input, axis=-1):
    x = as_tensor(input)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def cosine_similarity(a, b):
    a = as_tensor(a).ravel()
    b = as_tensor(b).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"vectors differ in length: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
