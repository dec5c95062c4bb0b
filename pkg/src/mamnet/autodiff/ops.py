"""Differentiable operations over :class:`Tensor`.

Only the set the model needs: convolution, batched matmul, softmax,
bilinear resizing, pooling, pointwise maps, and a handful of shape ops.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, make_result, note_branch


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} are not compatible") from None


# ---------------------------------------------------------------- pointwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return make_result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return make_result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return make_result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return make_result(
        out, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape),
                   _unbroadcast(-g * out / b.data, b.shape)),
        "div")


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g: (-g,), "neg")


def scale(x: Tensor, factor: float) -> Tensor:
    f = x.data.dtype.type(factor)
    return make_result(x.data * f, (x,), lambda g: (g * f,), "scale")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    note_branch(mask)
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,),
                       lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(d.dtype)
    return make_result(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ValueError("log: input must be strictly positive")
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2 * g * x.data,), "square")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    note_branch(inside)
    return make_result(np.clip(x.data, lo, hi).astype(x.dtype), (x,),
                       lambda g: (g * inside,), "clamp")


# ---------------------------------------------------------------- reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=x.dtype)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(out, (x,), back, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = range(x.ndim) if axis is None else (axis if isinstance(axis, tuple) else (axis,))
    n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool expects [B,C,H,W], got {x.shape}")
    h, w = x.shape[2:]
    out = x.data.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(x.dtype)
    inv = x.dtype.type(1.0 / (h * w))
    return make_result(out, (x,), lambda g: (np.broadcast_to(g * inv, x.shape).copy(),),
                       "global_avg_pool")


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                       lambda g: (g.transpose(inv),), "transpose")


def concat(inputs: Sequence[Tensor], axis: int = 0) -> Tensor:
    inputs = [as_tensor(t) for t in inputs]
    if not inputs:
        raise ValueError("concat needs at least one input")
    ref = inputs[0].shape
    ax = axis % len(ref)
    for t in inputs[1:]:
        if t.ndim != len(ref):
            raise ValueError(f"concat: rank mismatch {ref} vs {t.shape}")
        for d in range(len(ref)):
            if d != ax and t.shape[d] != ref[d]:
                raise ValueError(f"concat: extent mismatch on dim {d}: {ref[d]} vs {t.shape[d]}")
    sizes = [t.shape[ax] for t in inputs]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in inputs], axis=ax)
    return make_result(out, inputs, lambda g: tuple(np.split(g, bounds, axis=ax)), "concat")


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list:
    ax = axis % x.ndim
    if int(np.sum(sizes)) != x.shape[ax]:
        raise ValueError(f"split: sizes {list(sizes)} do not sum to extent {x.shape[ax]}")
    outs = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * x.ndim
        sl[ax] = slice(start, start + size)
        sl = tuple(sl)

        def back(g, sl=sl):
            full = np.zeros_like(x.data)
            full[sl] = g
            return (full,)

        outs.append(make_result(x.data[sl].copy(), (x,), back, "split"))
        start += size
    return outs


def index_select(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows along axis 0; repeated indices accumulate in backward."""
    idx = np.asarray(indices, dtype=np.int64)

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(x.data[idx], (x,), back, "index_select")


def flip(x: Tensor, axis: int) -> Tensor:
    return make_result(np.flip(x.data, axis=axis).copy(), (x,),
                       lambda g: (np.flip(g, axis=axis).copy(),), "flip")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ ({a.shape[-1]} vs {b.shape[-2]})")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ValueError(f"matmul: batch dims {a.shape[:-2]} and {b.shape[:-2]} do not broadcast") from None
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), back, "matmul")


def matmul_batched(a: Tensor, b: Tensor) -> Tensor:
    return matmul(a, b)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), back, "softmax")


# ---------------------------------------------------------------- convolution

def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding, NCHW layout."""
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be [B,C,H,W], got {x.shape}")
    if weight.ndim != 4:
        raise ValueError(f"conv2d: weight must be [Cout,Cin,kh,kw], got {weight.shape}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    b, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d: input channels (dim 1) = {cin} but weight expects {wcin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"conv2d: bias must have shape ({cout},), got {bias.shape}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp:
        raise ValueError(f"conv2d: kernel height {kh} exceeds padded height {hp}")
    if kw > wp:
        raise ValueError(f"conv2d: kernel width {kw} exceeds padded width {wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = _pad(x.data, padding)
    if kh == 1 and kw == 1:
        cols = xp[:, :, ::stride, ::stride][:, :, :ho, :wo].transpose(0, 2, 3, 1).reshape(-1, cin)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        # -> [B, Ho, Wo, Cin, kh, kw] flattened to rows
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, cin * kh * kw)
    wmat = weight.data.reshape(cout, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def back(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gw = (gmat.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = gmat.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(b, ho, wo, cin, kh, kw)
            gxp = np.zeros((b, cin, hp, wp), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, parents, back, "conv2d")


# ---------------------------------------------------------------- resampling

def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row d holds the linear weights of output d over the input samples.

    Half-pixel centres: s = (d + 0.5) * n_in / n_out - 0.5, clamped to [0, n_in - 1].
    """
    m = np.zeros((n_out, n_in), dtype=np.float64)
    s = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    s = np.clip(s, 0, n_in - 1)
    lo = np.floor(s).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = s - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1 - frac)
    np.add.at(m, (rows, hi), frac)
    return m.astype(dtype)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"bilinear_resize expects [B,C,H,W], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bilinear_resize: output size must be positive, got {(out_h, out_w)}")
    h, w = x.shape[2:]
    if (h, w) == (out_h, out_w):
        return make_result(x.data.copy(), (x,), lambda g: (g,), "bilinear_resize")
    rh = _interp_matrix(h, out_h, x.dtype)
    rw = _interp_matrix(w, out_w, x.dtype)
    out = np.matmul(np.matmul(rh, x.data), rw.T)
    return make_result(out, (x,), lambda g: (np.matmul(np.matmul(rh.T, g), rw),),
                       "bilinear_resize")


def upsample(x: Tensor, factor: int) -> Tensor:
    return bilinear_resize(x, x.shape[2] * factor, x.shape[3] * factor)
