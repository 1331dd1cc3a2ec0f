"""Differentiable primitives. Each op computes its forward result with numpy
and returns a node whose closure produces the parent gradients."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgument, ShapeError
from ..prng import SplitMix64
from .tensor import Tensor, as_tensor, make_node


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ----------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), back)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)

    def back(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return make_node(a.data ** exponent, (a,), back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def dropout(x: Tensor, p: float, seed: int, training: bool) -> Tensor:
    """Inverted dropout with a mask drawn from the SplitMix64 stream ``seed``."""
    if not 0.0 <= p < 1.0:
        raise InvalidArgument(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = SplitMix64(seed).uniform(x.data.size).reshape(x.shape) >= p
    scale = keep / (1.0 - p)
    return make_node(x.data * scale, (x,), lambda g: (g * scale,))


# ------------------------------------------------------- shape plumbing

def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: tuple) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return make_node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors: list, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Gather along axis 0; repeated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return make_node(x.data[index], (x,), back)


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    shape = x.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_node(np.asarray(x.data.sum(axis=axis)), (x,), back)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / n)


# ---------------------------------------------------------------- layers

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x W^T + b over the last axis; x may carry extra leading axes."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight fan-in {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("linear: bias length must equal fan-out")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_node(out.reshape(*lead, weight.shape[0]), parents, back)


def _conv_padding(kernel: int, stride: int, padding) -> int:
    if padding == "same":
        if stride != 1 or kernel % 2 == 0:
            raise ShapeError("'same' padding needs stride 1 and an odd kernel")
        return (kernel - 1) // 2
    if padding == "valid":
        return 0
    return int(padding)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding="same") -> Tensor:
    """Cross-correlation of x (B, Cin, T) with weight (Cout, Cin, K)."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: incompatible input {x.shape} and weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("conv1d: bias length must equal output channels")
    B, cin, T = x.shape
    cout, _, K = weight.shape
    pad = _conv_padding(K, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    if xp.shape[2] < K:
        raise ShapeError("conv1d: kernel longer than padded input")
    cols = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]  # B, Cin, To, K
    To = cols.shape[2]
    cols2 = cols.transpose(0, 2, 1, 3).reshape(B * To, cin * K)
    w2 = weight.data.reshape(cout, cin * K)
    out = cols2 @ w2.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(B, To, cout).transpose(0, 2, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.transpose(0, 2, 1).reshape(B * To, cout)
        gw = (g2.T @ cols2).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(B, To, cin, K)
            dxp = np.zeros(xp.shape)
            span = stride * (To - 1) + 1
            for k in range(K):
                dxp[:, :, k:k + span:stride] += dcols[:, :, :, k].transpose(0, 2, 1)
            gx = dxp[:, :, pad:pad + T]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return make_node(np.ascontiguousarray(out), parents, back)


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 2, padding: int | None = None) -> Tensor:
    """Adjoint of ``conv1d(., weight, stride, padding)``; weight is (Cin, Cout, K).

    With an even kernel and the default padding (K - stride) / 2 the output
    length is ``stride * T``.
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose1d: incompatible input {x.shape} and weight {weight.shape}")
    B, cin, Ti = x.shape
    _, cout, K = weight.shape
    if padding is None:
        if (K - stride) % 2 or K < stride:
            raise ShapeError("conv_transpose1d: default padding needs K - stride even and >= 0")
        padding = (K - stride) // 2
    full = (Ti - 1) * stride + K
    To = full - 2 * padding
    x2 = x.data.transpose(0, 2, 1).reshape(B * Ti, cin)
    w2 = weight.data.reshape(cin, cout * K)
    contrib = (x2 @ w2).reshape(B, Ti, cout, K)
    out_full = np.zeros((B, cout, full))
    span = stride * (Ti - 1) + 1
    for k in range(K):
        out_full[:, :, k:k + span:stride] += contrib[:, :, :, k].transpose(0, 2, 1)
    out = out_full[:, :, padding:padding + To]
    if bias is not None:
        out = out + bias.data[None, :, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g_full = np.pad(g, ((0, 0), (0, 0), (padding, full - To - padding)))
        win = sliding_window_view(g_full, K, axis=2)[:, :, ::stride, :]  # B, Cout, Ti, K
        dcontrib = win.transpose(0, 2, 1, 3).reshape(B * Ti, cout * K)
        gx = (dcontrib @ w2.T).reshape(B, Ti, cin).transpose(0, 2, 1) if x.requires_grad else None
        gw = (x2.T @ dcontrib).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return make_node(np.ascontiguousarray(out), parents, back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation of (B, C) or (B, C, T) input.

    In training mode the running buffers are updated in place (unbiased
    variance); in eval mode they replace the batch statistics.
    """
    if x.ndim not in (2, 3) or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batch_norm: input {x.shape} vs {gamma.shape[0]} channels")
    axes = (0,) if x.ndim == 2 else (0, 2)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1)
    if training:
        n = x.data.size // x.shape[1]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def back(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if training:
            n = x.data.size // x.shape[1]
            gx = (inv_std.reshape(bshape) / n) * (
                n * dxhat - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
        else:
            gx = dxhat * inv_std.reshape(bshape)
        return gx, gg, gb

    return make_node(out, (x, gamma, beta), back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis."""
    D = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def back(g):
        dxhat = g * gamma.data
        gx = (inv_std / D) * (D * dxhat - dxhat.sum(axis=-1, keepdims=True)
                              - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_node(out, (x, gamma, beta), back)


def max_pool1d(x: Tensor, width: int = 2) -> Tensor:
    """Non-overlapping max over windows of ``width`` along time; a trailing
    remainder shorter than the window is dropped."""
    if x.ndim != 3:
        raise ShapeError("max_pool1d expects (B, C, T)")
    B, C, T = x.shape
    To = T // width
    if To == 0:
        raise ShapeError(f"max_pool1d: length {T} shorter than window {width}")
    windows = x.data[:, :, :To * width].reshape(B, C, To, width)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gw = np.zeros((B, C, To, width))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros(x.shape)
        gx[:, :, :To * width] = gw.reshape(B, C, To * width)
        return (gx,)

    return make_node(out, (x,), back)


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, T) -> (B, C) mean over time."""
    if x.ndim != 3:
        raise ShapeError("global_avg_pool expects (B, C, T)")
    return mean(x, axis=2)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    s = scores - scores.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)
    return s


def attention_probs(x: np.ndarray, wq: np.ndarray, bq: np.ndarray, wk: np.ndarray,
                    bk: np.ndarray, heads: int) -> np.ndarray:
    """Attention weights (B, h, T, T) for inspection and tests."""
    B, T, D = x.shape
    dh = D // heads
    q = (x @ wq.T + bq).reshape(B, T, heads, dh).transpose(0, 2, 1, 3)
    k = (x @ wk.T + bk).reshape(B, T, heads, dh).transpose(0, 2, 1, 3)
    return softmax_rows(q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh))


def multi_head_attention(x: Tensor, heads: int, wq: Tensor, bq: Tensor, wk: Tensor,
                         bk: Tensor, wv: Tensor, bv: Tensor, wo: Tensor, bo: Tensor) -> Tensor:
    """Self-attention on (B, T, D): per head softmax(Q K^T / sqrt(D/h)) V,
    heads concatenated and projected by Wo."""
    if x.ndim != 3:
        raise ShapeError("multi_head_attention expects (B, T, D)")
    B, T, D = x.shape
    if heads < 1 or D % heads:
        raise InvalidArgument(f"embedding dim {D} not divisible by {heads} heads")
    dh = D // heads
    scale = 1.0 / math.sqrt(dh)
    x2 = x.data.reshape(B * T, D)

    def split(a):
        return a.reshape(B, T, heads, dh).transpose(0, 2, 1, 3)

    q = split(x2 @ wq.data.T + bq.data)
    k = split(x2 @ wk.data.T + bk.data)
    v = split(x2 @ wv.data.T + bv.data)
    p = softmax_rows(q @ k.transpose(0, 1, 3, 2) * scale)
    ctx = (p @ v).transpose(0, 2, 1, 3).reshape(B * T, D)
    out = (ctx @ wo.data.T + bo.data).reshape(B, T, D)

    def back(g):
        g2 = g.reshape(B * T, D)
        gwo = g2.T @ ctx
        gbo = g2.sum(axis=0)
        dctx = split(g2 @ wo.data)
        dp = dctx @ v.transpose(0, 1, 3, 2)
        dv = p.transpose(0, 1, 3, 2) @ dctx
        ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q

        def merge(a):
            return a.transpose(0, 2, 1, 3).reshape(B * T, D)

        dq, dk, dv = merge(dq), merge(dk), merge(dv)
        gx = (dq @ wq.data + dk @ wk.data + dv @ wv.data).reshape(B, T, D)
        return (gx, dq.T @ x2, dq.sum(axis=0), dk.T @ x2, dk.sum(axis=0),
                dv.T @ x2, dv.sum(axis=0), gwo, gbo)

    return make_node(out, (x, wq, bq, wk, bk, wv, bv, wo, bo), back)


def sinusoidal_positional_encoding(length: int, dim: int) -> np.ndarray:
    if dim % 2:
        raise InvalidArgument(f"positional encoding needs an even dimension, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


# ------------------------------------------------------------------ loss

def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences; gradient wrt pred is 2 (pred - target) / N."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.data.size != target.size or pred.data.size == 0:
        raise ShapeError(f"mse_loss: {pred.data.size} predictions vs {target.size} targets")
    diff = pred.data - target.reshape(pred.shape)
    n = diff.size

    def back(g):
        return (g * 2.0 * diff / n,)

    return make_node(np.asarray(np.mean(diff * diff)), (pred,), back)
