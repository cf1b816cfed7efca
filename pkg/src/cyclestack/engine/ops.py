"""Differentiable operations on rank-4 tensors.

Every op validates shapes, checks the result for NaN/Inf, and registers a
backward rule on the active tape. Backward rules are built from these same
ops, which is what makes second-order gradients (backward of a backward run
with ``create_graph=True``) come out exactly right — including through
convolutions, whose input/weight gradients are themselves expressed as
convolutions over padded/dilated/flipped operands.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, _wrap, check_finite, record

_f32 = np.float32

Axes = tuple[int, ...]


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], rule, what: str) -> Tensor:
    if data.dtype != _f32:
        data = data.astype(_f32)
    check_finite(data, what)
    out = _wrap(np.ascontiguousarray(data))
    return record(out, inputs, rule)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise arithmetic ------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, neg(g)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def rule(g: Tensor):
        ga = mul(g, b) if a.requires_grad else None
        gb = mul(g, a) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), rule, "mul")


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (neg(g),), "neg")


def smul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * _f32(c), (a,), lambda g: (smul(g, c),), "smul")


def sadd(a: Tensor, c: float) -> Tensor:
    return _result(a.data + _f32(c), (a,), lambda g: (g,), "sadd")


def cmul(a: Tensor, const: np.ndarray) -> Tensor:
    """Multiply by a constant array (no gradient flows into ``const``)."""
    if const.shape != a.shape:
        raise ShapeError(f"cmul: mask shape {const.shape} vs {a.shape}")
    return _result(a.data * const, (a,), lambda g: (cmul(g, const),), "cmul")


def pow_const(a: Tensor, p: float) -> Tensor:
    p = float(p)

    def rule(g: Tensor):
        return (mul(g, smul(pow_const(a, p - 1.0), p)),)

    return _result(a.data ** _f32(p), (a,), rule, "pow")


def log(a: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (mul(g, pow_const(a, -1.0)),)

    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return _result(data, (a,), rule, "log")


def exp(a: Tensor) -> Tensor:
    out = _result(np.exp(a.data), (a,), lambda g: (mul(g, out),), "exp")
    return out


def sqrt(a: Tensor) -> Tensor:
    return pow_const(a, 0.5)


# -- pointwise nonlinearities ------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(_f32)
    return _result(a.data * mask, (a,), lambda g: (cmul(g, mask),), "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = np.where(a.data > 0, _f32(1.0), _f32(slope))
    return _result(a.data * mask, (a,), lambda g: (cmul(g, mask),), "leaky_relu")


_SIG_LO = np.float32(np.finfo(np.float32).tiny)
_SIG_HI = np.float32(1.0) - np.float32(2.0 ** -24)  # largest float32 below 1


def sigmoid(a: Tensor) -> Tensor:
    t = np.exp(-np.abs(a.data))
    data = np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(_f32)
    # keep the open-interval contract even where float32 would round to 0/1
    np.clip(data, _SIG_LO, _SIG_HI, out=data)

    def rule(g: Tensor):
        return (mul(g, mul(out, sadd(neg(out), 1.0))),)

    out = _result(data, (a,), rule, "sigmoid")
    return out


def tanh(a: Tensor) -> Tensor:
    def rule(g: Tensor):
        return (mul(g, sadd(neg(mul(out, out)), 1.0)),)

    out = _result(np.tanh(a.data), (a,), rule, "tanh")
    return out


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)  # 0 at exactly 0: subgradient convention
    return _result(np.abs(a.data), (a,), lambda g: (cmul(g, sign),), "abs")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = ((a.data >= lo) & (a.data <= hi)).astype(_f32)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (cmul(g, mask),), "clamp")


POINTWISE = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
}


def pointwise(a: Tensor, kind: str) -> Tensor:
    try:
        fn = POINTWISE[kind]
    except KeyError:
        raise ShapeError(f"unknown pointwise kind {kind!r}") from None
    return fn(a)


# -- reductions and broadcasting ----------------------------------------------


def reduce_sum(a: Tensor, axes: Axes) -> Tensor:
    axes = tuple(sorted(axes))

    def rule(g: Tensor):
        return (broadcast_to(g, a.shape),)

    return _result(a.data.sum(axis=axes, keepdims=True), (a,), rule, "sum")


def reduce_mean(a: Tensor, axes: Axes) -> Tensor:
    axes = tuple(sorted(axes))
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    if count == 0:
        raise ShapeError("mean over zero elements")

    def rule(g: Tensor):
        return (smul(broadcast_to(g, a.shape), 1.0 / count),)

    return _result(a.data.mean(axis=axes, keepdims=True, dtype=_f32), (a,), rule, "mean")


def mean_all(a: Tensor) -> Tensor:
    return reduce_mean(a, (0, 1, 2, 3))


def sum_all(a: Tensor) -> Tensor:
    return reduce_sum(a, (0, 1, 2, 3))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    for i, (da, ds) in enumerate(zip(a.shape, shape)):
        if da != ds and da != 1:
            raise ShapeError(f"cannot broadcast {a.shape} to {shape} (axis {i})")
    if a.shape == shape:
        return a
    axes = tuple(i for i in range(4) if a.shape[i] == 1 and shape[i] != 1)

    def rule(g: Tensor):
        return (reduce_sum(g, axes),)

    return _result(np.broadcast_to(a.data, shape).copy(), (a,), rule, "broadcast")


# -- spatial layout primitives --------------------------------------------


def _pad_or_crop(a: Tensor, amounts: tuple[int, int, int, int]) -> Tensor:
    """Pad (positive amounts) and/or crop (negative) the spatial borders."""
    pads = tuple(max(v, 0) for v in amounts)
    crops = tuple(max(-v, 0) for v in amounts)
    out = a
    if any(pads):
        out = pad2d(out, pads)
    if any(crops):
        out = crop2d(out, crops)
    return out


def pad2d(a: Tensor, amounts: tuple[int, int, int, int]) -> Tensor:
    top, bottom, left, right = amounts
    if min(amounts) < 0:
        raise ShapeError(f"pad2d amounts must be non-negative, got {amounts}")
    data = np.pad(a.data, ((0, 0), (0, 0), (top, bottom), (left, right)))
    return _result(data, (a,), lambda g: (crop2d(g, amounts),), "pad2d")


def crop2d(a: Tensor, amounts: tuple[int, int, int, int]) -> Tensor:
    top, bottom, left, right = amounts
    if min(amounts) < 0:
        raise ShapeError(f"crop2d amounts must be non-negative, got {amounts}")
    H, W = a.shape[2], a.shape[3]
    if H - top - bottom < 1 or W - left - right < 1:
        raise ShapeError(f"crop2d {amounts} leaves nothing of spatial size {(H, W)}")
    data = a.data[:, :, top : H - bottom, left : W - right].copy()
    return _result(data, (a,), lambda g: (pad2d(g, amounts),), "crop2d")


def dilate2d(a: Tensor, stride: int) -> Tensor:
    """Insert ``stride - 1`` zeros between spatial elements."""
    if stride < 1:
        raise ShapeError("dilate2d stride must be >= 1")
    if stride == 1:
        return a
    N, C, H, W = a.shape
    data = np.zeros((N, C, (H - 1) * stride + 1, (W - 1) * stride + 1), dtype=_f32)
    data[:, :, ::stride, ::stride] = a.data
    return _result(data, (a,), lambda g: (undilate2d(g, stride),), "dilate2d")


def undilate2d(a: Tensor, stride: int) -> Tensor:
    if stride < 1:
        raise ShapeError("undilate2d stride must be >= 1")
    if stride == 1:
        return a
    N, C, H, W = a.shape
    data = a.data[:, :, ::stride, ::stride].copy()
    # trailing rows/cols that fall between sample points get zero gradient
    rem_h = H - ((data.shape[2] - 1) * stride + 1)
    rem_w = W - ((data.shape[3] - 1) * stride + 1)

    def rule(g: Tensor):
        gd = dilate2d(g, stride)
        if rem_h or rem_w:
            gd = pad2d(gd, (0, rem_h, 0, rem_w))
        return (gd,)

    return _result(data, (a,), rule, "undilate2d")


def flip2d(a: Tensor) -> Tensor:
    data = a.data[:, :, ::-1, ::-1].copy()
    return _result(data, (a,), lambda g: (flip2d(g),), "flip2d")


def swap01(a: Tensor) -> Tensor:
    data = np.ascontiguousarray(a.data.transpose(1, 0, 2, 3))
    return _result(data, (a,), lambda g: (swap01(g),), "swap01")


# -- convolution ----------------------------------------------------------------


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """Cross-correlation with zero padding, the usual CNN convention."""
    N, Ci, H, W = x.shape
    Co, Ciw, kh, kw = w.shape
    if Ci != Ciw:
        raise ShapeError(f"conv2d: input has {Ci} channels, weight expects {Ciw}")
    if stride < 1:
        raise ShapeError("conv2d: stride must be >= 1")
    if pad < 0:
        raise ShapeError("conv2d: pad must be >= 0")
    if b is not None and b.shape != (1, Co, 1, 1):
        raise ShapeError(f"conv2d: bias shape {b.shape} != (1, {Co}, 1, 1)")
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError(
            f"conv2d: non-positive output size for input {H}x{W}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )

    xd = x.data
    if pad:
        xd = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        N * Ho * Wo, Ci * kh * kw
    )
    out = cols @ w.data.reshape(Co, -1).T
    out = np.ascontiguousarray(out.reshape(N, Ho, Wo, Co).transpose(0, 3, 1, 2))
    if b is not None:
        out += b.data.reshape(1, Co, 1, 1)

    rem_h = (H + 2 * pad - kh) % stride
    rem_w = (W + 2 * pad - kw) % stride

    def rule(g: Tensor):
        gx = gw = gb = None
        gd = dilate2d(g, stride) if (x.requires_grad or w.requires_grad) else g
        if x.requires_grad:
            gp = _pad_or_crop(
                gd,
                (kh - 1 - pad, kh - 1 - pad + rem_h, kw - 1 - pad, kw - 1 - pad + rem_w),
            )
            gx = conv2d(gp, swap01(flip2d(w)), None, 1, 0)
        if w.requires_grad:
            xp = pad2d(x, (pad, pad, pad, pad)) if pad else x
            core = conv2d(swap01(xp), swap01(gd), None, 1, 0)
            if rem_h or rem_w:
                core = crop2d(core, (0, rem_h, 0, rem_w))
            gw = swap01(core)
        if b is not None and b.requires_grad:
            gb = reduce_sum(g, (0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    inputs = (x, w) if b is None else (x, w, b)
    return _result(out, inputs, rule, "conv2d")


# -- pixel shuffle and resampling ----------------------------------------------


def pixel_shuffle(a: Tensor, r: int) -> Tensor:
    N, C, H, W = a.shape
    if r < 1 or C % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: {C} channels not divisible by r^2={r * r}")
    C2 = C // (r * r)
    data = (
        a.data.reshape(N, C2, r, r, H, W)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(N, C2, H * r, W * r)
    )
    return _result(data.copy(), (a,), lambda g: (pixel_unshuffle(g, r),), "pixel_shuffle")


def pixel_unshuffle(a: Tensor, r: int) -> Tensor:
    N, C, H, W = a.shape
    if r < 1 or H % r != 0 or W % r != 0:
        raise ShapeError(f"pixel_unshuffle: spatial {H}x{W} not divisible by r={r}")
    data = (
        a.data.reshape(N, C, H // r, r, W // r, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(N, C * r * r, H // r, W // r)
    )
    return _result(data.copy(), (a,), lambda g: (pixel_shuffle(g, r),), "pixel_unshuffle")


def nearest_up_2x(a: Tensor) -> Tensor:
    data = np.repeat(np.repeat(a.data, 2, axis=2), 2, axis=3)

    def rule(g: Tensor):
        return (smul(area_down_2x(g), 4.0),)

    return _result(data, (a,), rule, "nearest_up_2x")


def area_down_2x(a: Tensor) -> Tensor:
    N, C, H, W = a.shape
    if H % 2 or W % 2:
        raise ShapeError(f"area_down_2x: spatial size {H}x{W} must be even")
    data = a.data.reshape(N, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5), dtype=_f32)

    def rule(g: Tensor):
        return (smul(nearest_up_2x(g), 0.25),)

    return _result(data, (a,), rule, "area_down_2x")


def resample(a: Tensor, mode: str) -> Tensor:
    if mode == "nearest_up_2x":
        return nearest_up_2x(a)
    if mode == "area_down_2x":
        return area_down_2x(a)
    raise ShapeError(f"unknown resample mode {mode!r}")


# -- channel concat / slice ------------------------------------------------


def concat_channels(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ShapeError("concat_channels needs at least one input")
    n, _, h, w = tensors[0].shape
    for t in tensors[1:]:
        if t.shape[0] != n or t.shape[2] != h or t.shape[3] != w:
            raise ShapeError(
                f"concat_channels: batch/spatial mismatch {tensors[0].shape} vs {t.shape}"
            )
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def rule(g: Tensor):
        return tuple(
            slice_channels(g, int(bounds[i]), int(bounds[i + 1]))
            if t.requires_grad
            else None
            for i, t in enumerate(tensors)
        )

    data = np.concatenate([t.data for t in tensors], axis=1)
    return _result(data, tuple(tensors), rule, "concat_channels")


def slice_channels(a: Tensor, lo: int, hi: int) -> Tensor:
    C = a.shape[1]
    if not (0 <= lo < hi <= C):
        raise ShapeError(f"slice_channels [{lo}:{hi}] out of range for C={C}")
    data = a.data[:, lo:hi].copy()

    def rule(g: Tensor):
        return (pad_channels(g, lo, C - hi),)

    return _result(data, (a,), rule, "slice_channels")


def pad_channels(a: Tensor, before: int, after: int) -> Tensor:
    if before < 0 or after < 0:
        raise ShapeError("pad_channels amounts must be non-negative")
    data = np.pad(a.data, ((0, 0), (before, after), (0, 0), (0, 0)))

    def rule(g: Tensor):
        return (slice_channels(g, before, before + a.shape[1]),)

    return _result(data, (a,), rule, "pad_channels")


# -- composites -----------------------------------------------------------------


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) spatial normalization followed by an affine map.

    Variance is the population variance over each channel's spatial slice.
    """
    N, C, H, W = x.shape
    if H * W < 1:
        raise ShapeError("instance_norm: zero spatial elements")
    if eps <= 0:
        raise ShapeError("instance_norm: eps must be positive")
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.shape != (1, C, 1, 1):
            raise ShapeError(f"instance_norm: {name} shape {t.shape} != (1, {C}, 1, 1)")
    m = reduce_mean(x, (2, 3))
    xc = sub(x, broadcast_to(m, x.shape))
    v = reduce_mean(mul(xc, xc), (2, 3))
    inv = pow_const(sadd(v, eps), -0.5)
    xhat = mul(xc, broadcast_to(inv, x.shape))
    return add(mul(xhat, broadcast_to(gamma, x.shape)), broadcast_to(beta, x.shape))


def l1_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference over all elements; the cycle-loss core."""
    _same_shape(a, b, "l1_mean")
    return mean_all(abs_(sub(a, b)))
