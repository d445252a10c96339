"""Differentiable operations over :class:`DTensor`.

All accumulation loops run in row-major order so results are reproducible
bit for bit for a fixed input.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DimensionError, NumericError
from .core import DTensor, as_tensor, make_result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: DTensor, b: DTensor, name: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from exc


# ---------------------------------------------------------------------------
# binary elementwise


def add(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a.shape),
                                  _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data
    return make_result(out, (a, b),
                       lambda g: (_unbroadcast(g / b.data, a.shape),
                                  _unbroadcast(-g * out / b.data, b.shape)))


# ---------------------------------------------------------------------------
# unary elementwise


def neg(x) -> DTensor:
    x = as_tensor(x)
    return make_result(-x.data, (x,), lambda g: (-g,))


def exp(x) -> DTensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def sqrt(x) -> DTensor:
    """Square root; the gradient at exactly zero is taken as zero."""
    x = as_tensor(x)
    out = np.sqrt(x.data)

    def bw(g):
        safe = np.where(out > 0, out, 1)
        return (np.where(out > 0, 0.5 * g / safe, 0),)

    return make_result(out, (x,), bw)


def abs(x) -> DTensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return make_result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def sigmoid(x) -> DTensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_result(out, (x,), lambda g: (g * out * (1 - out),))


def tanh(x) -> DTensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1 - out * out),))


def relu(x) -> DTensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def clip(x, lo: float, hi: float) -> DTensor:
    x = as_tensor(x)
    mask = (x.data >= lo) & (x.data <= hi)
    return make_result(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape plumbing


def sum(x, axis=None, keepdims: bool = False) -> DTensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make_result(out, (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> DTensor:
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape) -> DTensor:
    x = as_tensor(x)
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x, index) -> DTensor:
    x = as_tensor(x)
    out = x.data[index]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return make_result(np.array(out), (x,), bw)


def concat(tensors, axis: int = -3) -> DTensor:
    ts = [as_tensor(t) for t in tensors]
    ref = list(ts[0].shape)
    ax = axis % len(ref)
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(
            o != r for i, (o, r) in enumerate(zip(other, ref)) if i != ax
        ):
            raise DimensionError(f"concat: shapes {ts[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts)))

    return make_result(np.concatenate([t.data for t in ts], axis=ax), ts, bw)


def concat_channels(tensors) -> DTensor:
    """Concatenate along the channel axis; spatial extents must agree."""
    return concat(tensors, axis=-3)


def channel_mean(x) -> DTensor:
    return mean(x, axis=-3, keepdims=True)


def channel_max(x) -> DTensor:
    """Max over channels; ties route the gradient to the lowest channel."""
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=-3)[..., None, :, :]
    out = np.take_along_axis(x.data, idx, axis=-3)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g, axis=-3)
        return (gx,)

    return make_result(out, (x,), bw)


def take_hw(x, rows: np.ndarray, cols: np.ndarray) -> DTensor:
    """``out[..., i, j] = x[..., rows[i], cols[j]]`` with scatter-add backward."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = x.data[..., rows, :][..., cols]

    def bw(g):
        gr = np.zeros(x.shape[:-2] + (len(rows), x.shape[-1]), dtype=g.dtype)
        np.add.at(np.moveaxis(gr, -1, 0), cols, np.moveaxis(g, -1, 0))
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, -2, 0), rows, np.moveaxis(gr, -2, 0))
        return (gx,)

    return make_result(out, (x,), bw)


def pad_replicate(x, pad: int) -> DTensor:
    x = as_tensor(x)
    H, W = x.shape[-2:]
    rows = np.clip(np.arange(-pad, H + pad), 0, H - 1)
    cols = np.clip(np.arange(-pad, W + pad), 0, W - 1)
    return take_hw(x, rows, cols)


def gather_pixels(x, src: np.ndarray, dst: np.ndarray, out_hw: tuple) -> DTensor:
    """Move pixels of a (C, H, W) tensor: ``out[:, dst] = x[:, src]`` on
    flattened spatial indices; untouched outputs are zero."""
    x = as_tensor(x)
    C = x.shape[0]
    Ho, Wo = out_hw
    src = np.asarray(src, dtype=np.intp)
    dst = np.asarray(dst, dtype=np.intp)
    flat = x.data.reshape(C, -1)
    out = np.zeros((C, Ho * Wo), dtype=x.data.dtype)
    out[:, dst] = flat[:, src]

    def bw(g):
        gx = np.zeros_like(flat)
        np.add.at(gx.T, src, g.reshape(C, -1)[:, dst].T)
        return (gx.reshape(x.shape),)

    return make_result(out.reshape(C, Ho, Wo), (x,), bw)


# ---------------------------------------------------------------------------
# layers


def _as_batched(x: DTensor):
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise DimensionError(f"expected C×H×W or N×C×H×W, got shape {x.shape}")


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> DTensor:
    """2-D cross-correlation (no kernel flip) with zero padding."""
    x, weight = as_tensor(x), as_tensor(weight)
    xb, squeeze = _as_batched(x)
    if not np.all(np.isfinite(xb)):
        raise NumericError("conv2d: non-finite input")
    O, C, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ConfigurationError(f"conv2d: kernel must be square and odd, got {k}×{k2}")
    N, Cx, H, W = xb.shape
    if Cx != C:
        raise DimensionError(f"conv2d: weight expects {C} input channels, input has {Cx}")
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise DimensionError("conv2d: kernel larger than padded input")
    xp = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xb
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(N, C * k * k, Ho * Wo)
    w2 = weight.data.reshape(O, C * k * k)
    out = np.matmul(w2, cols)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
        inputs.append(bias)
    out = out.reshape(N, O, Ho, Wo)
    if squeeze:
        out = out[0]

    def bw(g):
        g2 = g.reshape(N, O, Ho * Wo)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2).reshape(N, C, k, k, Ho, Wo)
            dxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += dcols[:, :, i, j]
            gx = dxp[:, :, padding:padding + H, padding:padding + W]
            if squeeze:
                gx = gx[0]
        res = [gx, gw]
        if bias is not None:
            res.append(g2.sum(axis=(0, 2)))
        return tuple(res)

    return make_result(out, inputs, bw)


def transposed_conv2d(x, weight, stride: int, bias=None) -> DTensor:
    """Transposed convolution whose kernel equals its stride.

    Every input pixel writes one disjoint ``stride×stride`` output block.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    xb, squeeze = _as_batched(x)
    C, O, S, S2 = weight.shape
    if S != stride or S2 != stride:
        raise ConfigurationError(
            f"transposed_conv2d: kernel {S}×{S2} must equal stride {stride} (no overlap)")
    N, Cx, H, W = xb.shape
    if Cx != C:
        raise DimensionError(f"transposed_conv2d: weight expects {C} channels, input has {Cx}")
    x2 = xb.reshape(N, C, H * W)
    w2 = weight.data.reshape(C, O * S * S)
    y = np.matmul(w2.T, x2).reshape(N, O, S, S, H, W)
    out = y.transpose(0, 1, 4, 2, 5, 3).reshape(N, O, H * S, W * S)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)
    if squeeze:
        out = out[0]

    def bw(g):
        gb = g[None] if squeeze else g
        g2 = gb.reshape(N, O, H, S, W, S).transpose(0, 1, 3, 5, 2, 4).reshape(N, O * S * S, H * W)
        gx = np.matmul(w2, g2).reshape(N, C, H, W)
        gw = np.matmul(x2, g2.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        res = [gx[0] if squeeze else gx, gw]
        if bias is not None:
            res.append(gb.sum(axis=(0, 2, 3)))
        return tuple(res)

    return make_result(out, inputs, bw)


def pixel_shuffle(x, scale: int) -> DTensor:
    """(C·S², H, W) → (C, S·H, S·W): ``out[c, h·S+i, w·S+j] = in[c·S²+i·S+j, h, w]``."""
    x = as_tensor(x)
    *lead, Cs, H, W = x.shape
    if Cs % (scale * scale):
        raise DimensionError(f"pixel_shuffle: {Cs} channels not divisible by {scale}²")
    C = Cs // (scale * scale)
    L = len(lead)
    y = x.data.reshape(*lead, C, scale, scale, H, W)
    perm = list(range(L)) + [L, L + 3, L + 1, L + 4, L + 2]
    out = y.transpose(perm).reshape(*lead, C, H * scale, W * scale)
    inv = np.argsort(perm)

    def bw(g):
        g5 = g.reshape(*lead, C, H, scale, W, scale)
        return (g5.transpose(inv).reshape(x.shape),)

    return make_result(out, (x,), bw)


def pixel_unshuffle(x, scale: int) -> DTensor:
    """Inverse of :func:`pixel_shuffle`."""
    x = as_tensor(x)
    *lead, C, HS, WS = x.shape
    if HS % scale or WS % scale:
        raise DimensionError(f"pixel_unshuffle: extents {HS}×{WS} not divisible by {scale}")
    H, W = HS // scale, WS // scale
    L = len(lead)
    y = x.data.reshape(*lead, C, H, scale, W, scale)
    perm = list(range(L)) + [L, L + 2, L + 4, L + 1, L + 3]
    out = y.transpose(perm).reshape(*lead, C * scale * scale, H, W)
    inv = np.argsort(perm)

    def bw(g):
        g5 = g.reshape(*lead, C, scale, scale, H, W)
        return (g5.transpose(inv).reshape(x.shape),)

    return make_result(out, (x,), bw)


def _pool_windows(data: np.ndarray):
    H, W = data.shape[-2:]
    ph, pw = H % 2, W % 2
    if ph or pw:
        pad = [(0, 0)] * (data.ndim - 2) + [(0, ph), (0, pw)]
        data = np.pad(data, pad, mode="edge")
    H2, W2 = data.shape[-2] // 2, data.shape[-1] // 2
    lead = data.shape[:-2]
    win = data.reshape(*lead, H2, 2, W2, 2)
    L = len(lead)
    win = win.transpose(*range(L), L, L + 2, L + 1, L + 3).reshape(*lead, H2, W2, 4)
    return win, (H, W), (ph, pw)


def _unpool(gwin: np.ndarray, hw, pads) -> np.ndarray:
    H, W = hw
    ph, pw = pads
    *lead, H2, W2, _ = gwin.shape
    L = len(lead)
    g = gwin.reshape(*lead, H2, W2, 2, 2).transpose(*range(L), L, L + 2, L + 1, L + 3)
    g = g.reshape(*lead, 2 * H2, 2 * W2)
    if ph:
        g[..., H - 1, :] += g[..., H, :]
    if pw:
        g[..., :, W - 1] += g[..., :, W]
    return np.ascontiguousarray(g[..., :H, :W])


def max_pool2(x) -> DTensor:
    """2×2 max pool, stride 2; odd extents replicate the last row/column.

    Ties send the gradient to the first element in row-major order.
    """
    x = as_tensor(x)
    win, hw, pads = _pool_windows(x.data)
    idx = np.argmax(win, axis=-1)[..., None]
    out = np.take_along_axis(win, idx, axis=-1)[..., 0]

    def bw(g):
        gwin = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(gwin, idx, g[..., None], axis=-1)
        return (_unpool(gwin, hw, pads),)

    return make_result(out, (x,), bw)


def avg_pool2(x) -> DTensor:
    x = as_tensor(x)
    win, hw, pads = _pool_windows(x.data)
    out = win.mean(axis=-1)

    def bw(g):
        gwin = np.repeat(g[..., None] * 0.25, 4, axis=-1)
        return (_unpool(gwin, hw, pads),)

    return make_result(out, (x,), bw)
