# core/autodiff/ops.py
"""
Differentiable Operators
------------------------
Forward and backward kernels for every operator the recurrent cell uses.
Convolutions are computed on strided window views of the padded input
(im2col without materialising the patch matrix) and contracted with
numpy.tensordot. No broadcasting: shape mismatches raise ShapeError.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.autodiff.tensor import Tensor, record
from core.errors import GeometryError, NonFiniteError, ShapeError

logger = logging.getLogger("core.autodiff.ops")

_counters = threading.local()


# -----------------------------------------------------------
# Runtime multiply counter
# -----------------------------------------------------------
class MacCounter:
    """Counts multiply-accumulates executed by convolution kernels."""

    def __init__(self):
        self.macs = 0
        self.by_op = {"conv2d": 0, "conv2d_transposed": 0}

    def add(self, op: str, macs: int):
        self.macs += macs
        self.by_op[op] += macs


@contextmanager
def count_macs() -> Iterator[MacCounter]:
    """Count convolution MACs executed inside the block (current thread only)."""
    counter = MacCounter()
    stack = getattr(_counters, "stack", None)
    if stack is None:
        stack = _counters.stack = []
    stack.append(counter)
    try:
        yield counter
    finally:
        stack.pop()


def _tally(op: str, macs: int):
    for counter in getattr(_counters, "stack", ()):
        counter.add(op, macs)


# -----------------------------------------------------------
# Window helpers
# -----------------------------------------------------------
def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Strided view (B, C, out_h, out_w, kh, kw) over a padded NCHW array."""
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride][:, :, :out_h, :out_w]


def _scatter_windows(cols: np.ndarray, shape, stride: int) -> np.ndarray:
    """Adjoint of ``_windows``: sum (B, C, h, w, kh, kw) patches into ``shape``."""
    out = np.zeros(shape, dtype=cols.dtype)
    _, _, h, w, kh, kw = cols.shape
    span_h = stride * (h - 1) + 1
    span_w = stride * (w - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + span_h:stride, j:j + span_w:stride] += cols[:, :, :, :, i, j]
    return out


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _require_rank(t: Tensor, rank: int, what: str):
    if t.data.ndim != rank:
        raise ShapeError(f"{what} must have rank {rank}", t.shape)


def _check_conv_bias(bias: Optional[Tensor], channels: int):
    if bias is not None and bias.shape != (channels,):
        raise ShapeError(f"bias must have shape ({channels},)", bias.shape)


# -----------------------------------------------------------
# Convolutions
# -----------------------------------------------------------
def conv2d(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """
    Zero-padded 2-D cross-correlation.

    Args:
        input: [B, Cin, H, W]
        weight: [Cout, Cin, kH, kW]
        bias: optional [Cout]
        stride: step between receptive fields (>= 1)
        padding: zero padding on every side (>= 0)

    Returns:
        [B, Cout, floor((H + 2p - kH) / s) + 1, floor((W + 2p - kW) / s) + 1]
    """
    _require_rank(input, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    if stride < 1 or padding < 0:
        raise GeometryError(f"conv2d needs stride >= 1 and padding >= 0 (got {stride}, {padding})")
    b, cin, h, w = input.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError("conv2d input channels do not match weight", input.shape, weight.shape)
    _check_conv_bias(bias, cout)
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise GeometryError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1

    xp = _pad(input.data, padding)
    cols = _windows(xp, kh, kw, stride, out_h, out_w)
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)
    _tally("conv2d", b * cout * out_h * out_w * cin * kh * kw)

    need_x = input.requires_grad

    def _backward(g: np.ndarray):
        dw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        dx = None
        if need_x:
            dcols = np.tensordot(g, weight.data, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
            dxp = _scatter_windows(dcols, (b, cin, hp, wp), stride)
            dx = dxp[:, :, padding:padding + h, padding:padding + w]
        return dx, dw, db

    inputs = (input, weight) if bias is None else (input, weight, bias)
    return record("conv2d", inputs, out, _backward)


def conv2d_transposed(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                      stride: int = 1, padding: int = 0) -> Tensor:
    """
    Transposed convolution, the exact adjoint of ``conv2d`` with equal geometry.

    Args:
        input: [B, Cin, H, W]
        weight: [Cin, Cout, kH, kW]

    Returns:
        [B, Cout, (H - 1) * s - 2p + kH, (W - 1) * s - 2p + kW]
    """
    _require_rank(input, 4, "conv2d_transposed input")
    _require_rank(weight, 4, "conv2d_transposed weight")
    if stride < 1 or padding < 0:
        raise GeometryError(f"conv2d_transposed needs stride >= 1 and padding >= 0 (got {stride}, {padding})")
    b, cin, h, w = input.shape
    wcin, cout, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError("conv2d_transposed input channels do not match weight", input.shape, weight.shape)
    _check_conv_bias(bias, cout)
    out_h = (h - 1) * stride - 2 * padding + kh
    out_w = (w - 1) * stride - 2 * padding + kw
    if out_h < 1 or out_w < 1:
        raise GeometryError(f"conv2d_transposed output would be {out_h}x{out_w}")
    full_h = (h - 1) * stride + kh
    full_w = (w - 1) * stride + kw

    cols = np.tensordot(input.data, weight.data, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    full = _scatter_windows(cols, (b, cout, full_h, full_w), stride)
    out = full[:, :, padding:padding + out_h, padding:padding + out_w]
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)
    _tally("conv2d_transposed", b * cin * h * w * cout * kh * kw)

    need_x = input.requires_grad

    def _backward(g: np.ndarray):
        gfull = np.zeros((b, cout, full_h, full_w), dtype=g.dtype)
        gfull[:, :, padding:padding + out_h, padding:padding + out_w] = g
        gcols = _windows(gfull, kh, kw, stride, h, w)
        dw = np.tensordot(input.data, gcols, axes=([0, 2, 3], [0, 2, 3]))
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        dx = None
        if need_x:
            dx = np.tensordot(gcols, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        return dx, dw, db

    inputs = (input, weight) if bias is None else (input, weight, bias)
    return record("conv2d_transposed", inputs, out, _backward)


# -----------------------------------------------------------
# Rearrangement
# -----------------------------------------------------------
def _space_to_depth(x: np.ndarray, block: int) -> np.ndarray:
    b, c, h, w = x.shape
    y = x.reshape(b, c, h // block, block, w // block, block)
    return np.ascontiguousarray(y.transpose(0, 1, 3, 5, 2, 4)).reshape(b, c * block * block, h // block, w // block)


def _depth_to_space(x: np.ndarray, block: int) -> np.ndarray:
    b, cbb, h, w = x.shape
    c = cbb // (block * block)
    y = x.reshape(b, c, block, block, h, w)
    return np.ascontiguousarray(y.transpose(0, 1, 4, 2, 5, 3)).reshape(b, c, h * block, w * block)


def space_to_depth(input: Tensor, block: int) -> Tensor:
    """
    Fold each block x block spatial cell into channels.

    Output channel ``c * block**2 + dy * block + dx`` holds input channel ``c``
    at offset (dy, dx) inside the cell.
    """
    _require_rank(input, 4, "space_to_depth input")
    _, _, h, w = input.shape
    if block < 1 or h % block or w % block:
        raise GeometryError(f"space_to_depth: {h}x{w} not divisible by block {block}")
    out = _space_to_depth(input.data, block)
    return record("space_to_depth", (input,), out, lambda g: (_depth_to_space(g, block),))


def depth_to_space(input: Tensor, block: int) -> Tensor:
    """Inverse of ``space_to_depth``."""
    _require_rank(input, 4, "depth_to_space input")
    if block < 1 or input.shape[1] % (block * block):
        raise GeometryError(f"depth_to_space: {input.shape[1]} channels not divisible by {block * block}")
    out = _depth_to_space(input.data, block)
    return record("depth_to_space", (input,), out, lambda g: (_space_to_depth(g, block),))


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate NCHW tensors along channels, blocks in argument order."""
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = tensors[0]
    for t in tensors:
        _require_rank(t, 4, "concat_channels operand")
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref.shape[0], ref.shape[2], ref.shape[3]):
            raise ShapeError("concat_channels batch/spatial mismatch", ref.shape, t.shape)
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=1)

    def _backward(g: np.ndarray):
        return [np.ascontiguousarray(part) for part in np.split(g, splits, axis=1)]

    return record("concat_channels", tensors, out, _backward)


# -----------------------------------------------------------
# Element-wise
# -----------------------------------------------------------
def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Point-wise add, sub (a - b) or mul of identically shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"elementwise '{op}' requires identical shapes", a.shape, b.shape)
    if op == "add":
        return record("add", (a, b), a.data + b.data, lambda g: (g, g))
    if op == "sub":
        return record("sub", (a, b), a.data - b.data, lambda g: (g, -g))
    if op == "mul":
        return record("mul", (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))
    raise ValueError(f"Unknown elementwise op: {op}")


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("mul", a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a Python constant."""
    return record("scale", (a,), a.data * a.data.dtype.type(factor), lambda g: (g * g.dtype.type(factor),))


def mean_of(tensors: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of identically shaped tensors (used to average per-step losses)."""
    if not tensors:
        raise ShapeError("mean_of needs at least one tensor")
    ref = tensors[0]
    for t in tensors:
        if t.shape != ref.shape:
            raise ShapeError("mean_of requires identical shapes", ref.shape, t.shape)
    n = len(tensors)
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total = total + t.data
    out = total / ref.data.dtype.type(n)
    return record("mean_of", tensors, out, lambda g: [g / g.dtype.type(n) for _ in range(n)])


# -----------------------------------------------------------
# Activations
# -----------------------------------------------------------
def activation(kind: str, input: Tensor, slope: Union[Tensor, float, None] = None) -> Tensor:
    """
    ReLU or PReLU with a single shared slope.

    The negative branch is taken for x < 0 only, so at exactly x == 0 the
    slope receives no gradient and the input gradient is 1 (PReLU) or 0 (ReLU).
    """
    x = input.data
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{kind} received non-finite input")
    if kind == "relu":
        return record("relu", (input,), np.maximum(x, 0), lambda g: (g * (x > 0),))
    if kind != "prelu":
        raise ValueError(f"Unknown activation: {kind}")

    if not isinstance(slope, Tensor):
        slope = Tensor(np.array([0.25 if slope is None else slope], dtype=x.dtype))
    if slope.size != 1:
        raise ShapeError("prelu slope must have a single element", slope.shape)
    if not np.isfinite(slope.data).all():
        raise NonFiniteError("prelu slope is not finite", slope.name)
    a = x.dtype.type(slope.data.reshape(-1)[0])
    negative = x < 0
    out = np.where(negative, a * x, x)

    def _backward(g: np.ndarray):
        dx = np.where(negative, g * a, g)
        dslope = np.sum(g * x * negative, dtype=g.dtype).reshape(slope.shape).astype(slope.dtype)
        return dx, dslope

    return record("prelu", (input, slope), out, _backward)


def relu(input: Tensor) -> Tensor:
    return activation("relu", input)


def prelu(input: Tensor, slope: Union[Tensor, float]) -> Tensor:
    return activation("prelu", input, slope)


# -----------------------------------------------------------
# Loss
# -----------------------------------------------------------
def mean_abs_error(pred: Tensor, target: Tensor) -> Tensor:
    """(1/N) * sum |pred - target| as a 0-d tensor; subgradient 0 at exact ties."""
    if pred.shape != target.shape:
        raise ShapeError("mean_abs_error requires identical shapes", pred.shape, target.shape)
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.abs(diff).mean(), dtype=diff.dtype)
    sign = np.sign(diff)

    def _backward(g: np.ndarray):
        d = sign * (g / diff.dtype.type(n))
        return d, -d

    return record("mean_abs_error", (pred, target), out, _backward)


__all__: List[str] = [
    "MacCounter",
    "count_macs",
    "conv2d",
    "conv2d_transposed",
    "space_to_depth",
    "depth_to_space",
    "concat_channels",
    "elementwise",
    "add",
    "sub",
    "mul",
    "scale",
    "mean_of",
    "activation",
    "relu",
    "prelu",
    "mean_abs_error",
]
