"""Dense float64 array primitives: elementwise ops, matmul, 3x3 convolution, 2x2 max pooling.

Tensors are plain ``numpy.ndarray`` objects in float64, laid out row-major with
(channel, height, width) ordering. Convolution and pooling accept either a single
image ``(C, H, W)`` or a batch ``(N, C, H, W)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

DTYPE = np.float64
KERNEL = 3


def tensor(values, shape=None) -> np.ndarray:
    """Build a float64 tensor, optionally reshaping flat row-major data."""
    arr = np.asarray(values, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"{arr.size} values cannot fill shape {shape}", arr.shape, shape)
        arr = arr.reshape(shape)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor dimensions must be >= 1, got {arr.shape}", arr.shape)
    return arr


def elementwise(op, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}", a.shape, b.shape)
    return np.asarray(op(a, b), dtype=DTYPE)


def add(a, b):
    return elementwise(np.add, a, b)


def mul(a, b):
    return elementwise(np.multiply, a, b)


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}", a.shape, b.shape)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}", a.shape, b.shape)
    return a @ b


def _as_batch(x):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}", x.shape)


def im2col(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, 9*C) patches for a stride-1, pad-1, 3x3 convolution.

    Columns are ordered (dy, dx, channel), matching :func:`_kernel_matrix`.
    """
    n, c, h, w = x.shape
    padded = np.zeros((n, h + 2, w + 2, c), dtype=DTYPE)
    padded[:, 1:-1, 1:-1, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((n, h, w, KERNEL * KERNEL, c), dtype=DTYPE)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            cols[:, :, :, dy * KERNEL + dx, :] = padded[:, dy:dy + h, dx:dx + w, :]
    return cols.reshape(n * h * w, KERNEL * KERNEL * c)


def col2im(cols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch gradients back onto the image."""
    n, c, h, w = shape
    cols = cols.reshape(n, h, w, KERNEL * KERNEL, c)
    out = np.zeros((n, h + 2, w + 2, c), dtype=DTYPE)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            out[:, dy:dy + h, dx:dx + w, :] += cols[:, :, :, dy * KERNEL + dx, :]
    return out[:, 1:-1, 1:-1, :].transpose(0, 3, 1, 2)


def _kernel_matrix(kernels):
    """(C_out, C_in, 3, 3) -> (C_out, 9*C_in) in (dy, dx, channel) column order."""
    return kernels.transpose(0, 2, 3, 1).reshape(kernels.shape[0], -1)


def _check_conv(x, kernels, bias):
    if kernels.ndim != 4 or kernels.shape[2:] != (KERNEL, KERNEL):
        raise ShapeError(f"kernels must be (C_out, C_in, 3, 3), got {kernels.shape}", kernels.shape)
    if x.shape[1] != kernels.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]} channels, kernels expect {kernels.shape[1]}",
            x.shape, kernels.shape,
        )
    if bias is not None and bias.shape != (kernels.shape[0],):
        raise ShapeError(f"bias must be ({kernels.shape[0]},), got {bias.shape}", bias.shape)


def conv2d_forward(x, kernels, bias=None):
    """Batched convolution returning ``(out, cols)``; ``cols`` feeds :func:`conv2d_backward`."""
    kernels = np.asarray(kernels, dtype=DTYPE)
    bias = None if bias is None else np.asarray(bias, dtype=DTYPE)
    _check_conv(x, kernels, bias)
    n, _, h, w = x.shape
    c_out = kernels.shape[0]
    cols = im2col(x)
    out = cols @ _kernel_matrix(kernels).T
    if bias is not None:
        out += bias
    return out.reshape(n, h, w, c_out).transpose(0, 3, 1, 2), cols


def conv2d_backward(dout, cols, kernels, input_shape):
    """Gradients of a stride-1 same convolution: returns ``(dx, dkernels, dbias)``."""
    c_out = kernels.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
    c_in = kernels.shape[1]
    dkernels = (dflat.T @ cols).reshape(c_out, KERNEL, KERNEL, c_in).transpose(0, 3, 1, 2)
    dbias = dflat.sum(axis=0)
    dcols = dflat @ _kernel_matrix(kernels)
    return col2im(dcols, input_shape), dkernels, dbias


def conv2d(x, kernels, bias=None) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1: output keeps the input's spatial size."""
    batch, single = _as_batch(x)
    out, _ = conv2d_forward(batch, kernels, bias)
    return out[0] if single else out


def _quadrants(x):
    return x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2], x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2]


def maxpool2(x, with_argmax=True):
    """Non-overlapping 2x2 max pooling.

    Returns ``(out, argmax)`` where ``argmax`` holds, for every output cell, the
    position 0..3 inside its window (row-major). Ties go to the smallest position.
    """
    batch, single = _as_batch(x)
    n, c, h, w = batch.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even height and width, got {(h, w)}", batch.shape)
    q0, q1, q2, q3 = _quadrants(batch)
    out = np.maximum(np.maximum(q0, q1), np.maximum(q2, q3))
    argmax = window_argmax(batch, out) if with_argmax else None
    if single:
        return out[0], None if argmax is None else argmax[0]
    return out, argmax


def window_argmax(x, out) -> np.ndarray:
    """Window positions (0..3) of the pooled maxima ``out`` inside batched input ``x``."""
    q0, q1, q2, _ = _quadrants(x)
    return np.where(q0 == out, 0, np.where(q1 == out, 1, np.where(q2 == out, 2, 3))).astype(np.int8)


def maxpool2_backward(dout, argmax, input_shape) -> np.ndarray:
    """Route each pooled gradient to the input cell that won its window."""
    dout = np.asarray(dout, dtype=DTYPE)
    single = dout.ndim == 3
    if single:
        dout, argmax = dout[None], argmax[None]
        input_shape = (1,) + tuple(input_shape)
    dx = np.zeros(input_shape, dtype=DTYPE)
    for k, q in enumerate(_quadrants(dx)):
        q[...] = np.where(argmax == k, dout, 0.0)
    return dx[0] if single else dx


def flat_index(argmax, shape):
    """Convert window positions from :func:`maxpool2` into flat indices of a (C,H,W) input."""
    c, h, w = shape
    ch, oy, ox = np.indices(argmax.shape)
    y = 2 * oy + argmax // 2
    x = 2 * ox + argmax % 2
    return (ch * h + y) * w + x
