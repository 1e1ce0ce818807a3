"""Dense tensor kernels: matmul, 2-D convolution, max pooling, elementwise ops.

Tensors are plain numpy arrays (row-major, float32 or float64). Every kernel is
deterministic for fixed inputs and produces finite outputs from finite inputs.
Convolution runs as im2col + matmul so that the truncated-backward savings are
measured against a realistically fast baseline; the naive nested-loop versions
live in the test suite as independent oracles.

Gradient kernels are split into separately callable pieces (input / kernel /
bias) so a gate plan can skip exactly the work it gates off while the pieces
that do run stay bitwise-identical to a full backward pass.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a [M,K] and b [K,N]."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-D operands, got {a.shape} and {b.shape}", a.shape, b.shape
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} x {b.shape}", a.shape, b.shape
        )
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_grad_input(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Route gradients through the positive entries recorded by the forward mask."""
    return grad_out * mask


def _conv_out_dim(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0:
        raise ShapeError(
            f"kernel size {k} exceeds padded input extent {size + 2 * padding}",
            (size,), (k,),
        )
    if span % stride != 0:
        raise ShapeError(
            f"non-integral output size: ({size} + 2*{padding} - {k}) / {stride}",
            (size,), (k,),
        )
    return span // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Unfold [N,C,H,W] into patch rows [N*H'*W', C*kh*kw].

    Patch positions are taken at every `stride` offset; callers that require
    exact division check it themselves (conv2d raises, pooling floors).
    """
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    col = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * kh * kw)
    return col


def col2im(
    col: np.ndarray,
    input_shape: tuple,
    kh: int,
    kw: int,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch rows back onto the input grid."""
    n, c, h, w = input_shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    col6 = col.reshape(n, out_h, out_w, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=col.dtype)
    for y in range(kh):
        y_max = y + stride * out_h
        for x in range(kw):
            x_max = x + stride * out_w
            img[:, :, y:y_max:stride, x:x_max:stride] += col6[:, :, y, x]
    if padding:
        img = img[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(img)


def conv2d(
    x: np.ndarray,
    kernels: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Cross-correlation of [N,C,H,W] with [F,C,kh,kw] kernels plus per-filter bias."""
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-D input and kernels, got {x.shape} and {kernels.shape}",
            x.shape, kernels.shape,
        )
    n, c, h, w = x.shape
    f, ck, kh, kw = kernels.shape
    if ck != c:
        raise ShapeError(
            f"kernel channels {ck} do not match input channels {c}", x.shape, kernels.shape
        )
    if bias.shape != (f,):
        raise ShapeError(f"bias shape {bias.shape} != ({f},)", bias.shape, (f,))
    out_h = _conv_out_dim(h, kh, stride, padding)
    out_w = _conv_out_dim(w, kw, stride, padding)
    col = im2col(x, kh, kw, stride, padding)
    out = col @ kernels.reshape(f, -1).T + bias
    return np.ascontiguousarray(out.reshape(n, out_h, out_w, f).transpose(0, 3, 1, 2))


def _grad_out_matrix(grad_out: np.ndarray) -> np.ndarray:
    f = grad_out.shape[1]
    return np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1)).reshape(-1, f)


def conv2d_grad_bias(grad_out: np.ndarray) -> np.ndarray:
    """d loss / d bias: sum the output cotangent over batch and spatial positions."""
    return grad_out.sum(axis=(0, 2, 3))


def conv2d_grad_kernels(col: np.ndarray, grad_out: np.ndarray, kernel_shape: tuple) -> np.ndarray:
    """d loss / d kernels from the forward's im2col matrix and the output cotangent."""
    dout = _grad_out_matrix(grad_out)
    return np.ascontiguousarray((col.T @ dout).T).reshape(kernel_shape)


def conv2d_grad_input(
    kernels: np.ndarray,
    grad_out: np.ndarray,
    input_shape: tuple,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """d loss / d input: fold the cotangent back through the kernels."""
    f = kernels.shape[0]
    dout = _grad_out_matrix(grad_out)
    dcol = dout @ kernels.reshape(f, -1)
    return col2im(dcol, input_shape, kernels.shape[2], kernels.shape[3], stride, padding)


def conv2d_grads(
    x: np.ndarray,
    kernels: np.ndarray,
    grad_out: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple:
    """Exact adjoints of conv2d: (grad_input, grad_kernels, grad_bias)."""
    n, c, h, w = x.shape
    f, _, kh, kw = kernels.shape
    out_h = _conv_out_dim(h, kh, stride, padding)
    out_w = _conv_out_dim(w, kw, stride, padding)
    if grad_out.shape != (n, f, out_h, out_w):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match conv output "
            f"({n}, {f}, {out_h}, {out_w})",
            grad_out.shape, (n, f, out_h, out_w),
        )
    col = im2col(x, kh, kw, stride, padding)
    grad_input = conv2d_grad_input(kernels, grad_out, x.shape, stride, padding)
    grad_kernels = conv2d_grad_kernels(col, grad_out, kernels.shape)
    grad_bias = conv2d_grad_bias(grad_out)
    return grad_input, grad_kernels, grad_bias


def _pool_windows(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects 4-D input, got {x.shape}", x.shape)
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(
            f"pool window {window} larger than input {h}x{w}", x.shape, (window, window)
        )
    return sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]


def maxpool2d(x: np.ndarray, window: int, stride: int | None = None) -> tuple:
    """Max pooling with floor semantics; returns (output, argmax_indices).

    argmax_indices holds, per output element, the winner's flat index into the
    H*W plane of its (batch, channel) slab. Ties break to the lowest linear
    index, which keeps the backward routing deterministic.
    """
    if stride is None:
        stride = window
    windows = _pool_windows(x, window, stride)
    n, c = x.shape[0], x.shape[1]
    out_h, out_w = windows.shape[2], windows.shape[3]
    flat = windows.reshape(n, c, out_h, out_w, window * window)
    offset = flat.argmax(axis=4)
    out = np.take_along_axis(flat, offset[..., None], axis=4)[..., 0]
    rows = offset // window + np.arange(out_h)[:, None] * stride
    cols = offset % window + np.arange(out_w)[None, :] * stride
    argmax = rows * x.shape[3] + cols
    return np.ascontiguousarray(out), argmax


def maxpool2d_values(x: np.ndarray, window: int, stride: int | None = None) -> np.ndarray:
    """Pooled maxima only, identical values to maxpool2d, no argmax bookkeeping."""
    if stride is None:
        stride = window
    return np.ascontiguousarray(_pool_windows(x, window, stride).max(axis=(4, 5)))


def maxpool2d_grad_input(
    grad_out: np.ndarray, argmax: np.ndarray, input_shape: tuple
) -> np.ndarray:
    """Scatter-add the cotangent onto the recorded winner positions."""
    n, c, h, w = input_shape
    grad_in = np.zeros((n * c, h * w), dtype=grad_out.dtype)
    rows = np.arange(n * c)[:, None]
    np.add.at(grad_in, (rows, argmax.reshape(n * c, -1)), grad_out.reshape(n * c, -1))
    return grad_in.reshape(n, c, h, w)
