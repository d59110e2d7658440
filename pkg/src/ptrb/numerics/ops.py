"""Differentiable kernels.

Every function takes and returns :class:`Tensor`. Backward rules are
closures returning one gradient per parent (``None`` for non-differentiable
inputs). Broadcasting follows numpy for the elementwise ops only.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from .tensor import Tensor, as_tensor, grad_enabled, record


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return record(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return record(ad / bd, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)), "div")


def neg(a):
    return record(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a):
    y = np.exp(a.data)
    return record(y, (a,), lambda g: (g * y,), "exp")


def log(a):
    x = a.data
    return record(np.log(x), (a,), lambda g: (g / x,), "log")


def square(a):
    x = a.data
    return record(x * x, (a,), lambda g: (2.0 * g * x,), "square")


def relu(a):
    x = a.data
    mask = x > 0
    return record(np.where(mask, x, 0.0), (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a):
    y = _sigmoid(a.data)
    return record(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def silu(a):
    x = a.data
    s = _sigmoid(x)

    def backward(g):
        return (g * s * (1.0 + x * (1.0 - s)),)

    return record(x * s, (a,), backward, "silu")


def softplus(a):
    x = a.data
    y = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    return record(y, (a,), lambda g: (g * _sigmoid(x),), "softplus")


_GELU_K = np.sqrt(2.0 / np.pi)


def gelu(a):
    """GELU, tanh approximation."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_K * x * (1.0 + 0.044715 * x2))

    def backward(g):
        dinner = _GELU_K * (1.0 + 0.134145 * x2)
        return (g * (0.5 * ((1.0 + t) + x * (1.0 - t * t) * dinner)),)

    return record(0.5 * x * (1.0 + t), (a,), backward, "gelu")


# ----------------------------------------------------------------- linear alg

def matmul(a, b):
    """``a @ b`` for ``(..., M, K) @ (K, N)`` or equal-batch ``(..., M, K) @ (..., K, N)``."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise DimensionError(f"matmul: {ad.shape} @ {bd.shape}")
    if bd.ndim == 2:
        def backward(g):
            ga = g @ bd.T
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    else:
        if ad.shape[:-2] != bd.shape[:-2]:
            raise DimensionError(f"matmul batch dims differ: {ad.shape} @ {bd.shape}")

        def backward(g):
            return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return record(ad @ bd, (a, b), backward, "matmul")


def linear(x, weight, bias=None):
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# ----------------------------------------------------------------- reductions

def _expand(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    shape = a.shape
    y = a.data.sum(axis=axis, keepdims=keepdims)
    return record(y, (a,), lambda g: (_expand(g, shape, axis, keepdims),), "sum")


def mean(a, axis=None, keepdims=False):
    shape = a.shape
    y = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.size / (y.size or 1)
    return record(y, (a,), lambda g: (_expand(g, shape, axis, keepdims) / n,), "mean")


def max(a, axis, keepdims=False):  # noqa: A001
    """Max along one axis; the gradient goes to the first maximal entry."""
    x = a.data
    idx = np.argmax(x, axis=axis)
    idx_k = np.expand_dims(idx, axis)
    y = np.take_along_axis(x, idx_k, axis)
    if not keepdims:
        y = np.squeeze(y, axis)

    def backward(g):
        gx = np.zeros_like(x)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, idx_k, gk, axis)
        return (gx,)

    return record(y, (a,), backward, "max")


# ------------------------------------------------------------------ structure

def reshape(a, shape):
    old = a.shape
    return record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes):
    inv = np.argsort(axes)
    return record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(a, i, j):
    return record(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    y = np.concatenate([t.data for t in tensors], axis=axis)
    return record(y, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    y = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)

    def backward(g):
        return tuple(np.squeeze(p, axis) for p in np.split(g, n, axis=axis))

    return record(y, tensors, backward, "stack")


def getitem(a, key):
    x = a.data
    advanced = isinstance(key, (list, np.ndarray)) or (
        isinstance(key, tuple) and any(isinstance(k, (list, np.ndarray)) for k in key)
    )

    def backward(g):
        gx = np.zeros_like(x)
        if advanced:
            np.add.at(gx, key, g)
        else:
            gx[key] = g
        return (gx,)

    return record(x[key], (a,), backward, "getitem")


def _full_index(index, axis, shape):
    idx = []
    for i in range(len(shape)):
        if i == axis:
            idx.append(index)
        else:
            view = [1] * len(shape)
            view[i] = shape[i]
            idx.append(np.arange(shape[i]).reshape(view))
    return tuple(np.broadcast_arrays(*idx))


def gather(a, index, axis):
    """``take_along_axis``; ``index`` may repeat entries (gradients accumulate)."""
    x = a.data
    index = np.asarray(index, dtype=np.int64)
    full = _full_index(index, axis, x.shape)
    y = x[full]

    def backward(g):
        gx = np.zeros_like(x)
        np.add.at(gx, full, g)
        return (gx,)

    return record(y, (a,), backward, "gather")


def scatter(a, index, axis, size):
    """Inverse of :func:`gather` for a permutation ``index``: ``out[index] = a``."""
    x = a.data
    index = np.asarray(index, dtype=np.int64)
    out_shape = list(x.shape)
    out_shape[axis] = size
    full = _full_index(index, axis, x.shape)
    y = np.zeros(out_shape)
    y[full] = x
    return record(y, (a,), lambda g: (g[full],), "scatter")


# -------------------------------------------------------------- normalization

def layer_norm(x, gamma, beta, eps=1e-5):
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: last extent {d} vs gamma {gamma.shape}, beta {beta.shape}")
    xd = x.data
    mu = xd.mean(-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gd = gamma.data

    def backward(g):
        gxhat = g * gd
        gx = rstd * (gxhat - gxhat.mean(-1, keepdims=True)
                     - xhat * (gxhat * xhat).mean(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(lead), g.sum(lead)

    return record(xhat * gd + beta.data, (x, gamma, beta), backward, "layer_norm")


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.1, eps=1e-5):
    """Normalize over every axis but the last.

    In training mode batch statistics are used and ``running_mean`` /
    ``running_var`` (plain arrays) are updated in place.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm: channels {c} vs gamma {gamma.shape}")
    xd = x.data.reshape(-1, c)
    gd = gamma.data
    if training:
        m = xd.shape[0]
        mu = xd.mean(0)
        xc = xd - mu
        var = (xc * xc).mean(0)
        rstd = 1.0 / np.sqrt(var + eps)
        xhat = xc * rstd
        if running_mean is not None:
            unbiased = var * m / (m - 1) if m > 1 else var
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased

        def backward(g):
            g2 = g.reshape(-1, c)
            gxhat = g2 * gd
            gx = rstd * (gxhat - gxhat.mean(0) - xhat * (gxhat * xhat).mean(0))
            return gx.reshape(x.shape), (g2 * xhat).sum(0), g2.sum(0)
    else:
        rstd = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean) * rstd

        def backward(g):
            g2 = g.reshape(-1, c)
            return (g2 * gd * rstd).reshape(x.shape), (g2 * xhat).sum(0), g2.sum(0)

    y = (xhat * gd + beta.data).reshape(x.shape)
    return record(y, (x, gamma, beta), backward, "batch_norm")


def l2_normalize(x, eps=1e-12):
    """Rows scaled to unit norm; an all-zero row maps to the first basis vector."""
    xd = x.data
    n = np.sqrt((xd * xd).sum(-1, keepdims=True))
    degenerate = n < eps
    safe = np.where(degenerate, 1.0, n)
    y = xd / safe
    if degenerate.any():
        basis = np.zeros(xd.shape[-1])
        basis[0] = 1.0
        y = np.where(degenerate, basis, y)

    def backward(g):
        gx = (g - y * (g * y).sum(-1, keepdims=True)) / safe
        return (np.where(degenerate, 0.0, gx),)

    return record(y, (x,), backward, "l2_normalize")


# ------------------------------------------------------------ probabilistic

def softmax(x, axis=-1):
    xd = x.data
    e = np.exp(xd - xd.max(axis, keepdims=True))
    y = e / e.sum(axis, keepdims=True)
    return record(y, (x,), lambda g: (y * (g - (g * y).sum(axis, keepdims=True)),), "softmax")


def log_softmax(x, axis=-1):
    xd = x.data
    z = xd - xd.max(axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return record(y, (x,), lambda g: (g - p * g.sum(axis, keepdims=True),), "log_softmax")


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    ld = logits.data
    labels = np.asarray(labels, dtype=np.int64)
    if ld.ndim != 2 or labels.shape != (ld.shape[0],):
        raise DimensionError(f"cross_entropy: logits {ld.shape}, labels {labels.shape}")
    n = ld.shape[0]
    z = ld - ld.max(1, keepdims=True)
    lse = np.log(np.exp(z).sum(1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def backward(g):
        gl = np.exp(logp)
        gl[rows, labels] -= 1.0
        return (gl * (g / n),)

    return record(loss, (logits,), backward, "cross_entropy")


def smooth_l1(pred, target):
    """Mean Huber loss with unit threshold."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"smooth_l1: {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    ad = np.abs(d)
    per = np.where(ad < 1.0, 0.5 * d * d, ad - 0.5)
    n = d.size

    def backward(g):
        gp = g * np.clip(d, -1.0, 1.0) / n
        return gp, -gp

    return record(per.mean(), (pred, target), backward, "smooth_l1")


def dropout(x, rate, rng, training=True):
    if not training or rate <= 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return record(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# ------------------------------------------------------------------ sequence

def depthwise_conv1d(x, kernel, bias=None):
    """Per-channel causal convolution over the second-to-last axis.

    ``x`` is ``(..., L, D)``, ``kernel`` is ``(W, D)``; the input is left-padded
    with ``W - 1`` zeros so the output keeps length ``L``.
    """
    w, d = kernel.shape
    if x.shape[-1] != d:
        raise DimensionError(f"depthwise_conv1d: input channels {x.shape[-1]} vs kernel {d}")
    xd, kd = x.data, kernel.data
    L = xd.shape[-2]
    pad = [(0, 0)] * xd.ndim
    pad[-2] = (w - 1, 0)
    xp = np.pad(xd, pad)
    y = np.zeros_like(xd)
    for j in range(w):
        y += kd[j] * xp[..., j:j + L, :]
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    if bias is not None:
        y += bias.data

    def backward(g):
        gxp = np.zeros_like(xp)
        gk = np.empty_like(kd)
        lead = tuple(range(g.ndim - 1))
        for j in range(w):
            gxp[..., j:j + L, :] += g * kd[j]
            gk[j] = (g * xp[..., j:j + L, :]).sum(lead)
        out = (gxp[..., w - 1:, :], gk)
        return out if bias is None else out + (g.sum(lead),)

    return record(y, parents, backward, "depthwise_conv1d")


class ScanError(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"selective scan produced a non-finite state at step {step}")
        self.step = step


def selective_scan(u, delta, A, B, C, skip):
    """Input-dependent linear recurrence, see :mod:`ptrb.seq_mixer`.

    Shapes: ``u, delta`` ``([batch,] L, Din)``; ``A`` ``(Din, S)``;
    ``B, C`` ``([batch,] L, S)``; ``skip`` ``(Din,)``.
    """
    squeeze = u.ndim == 2
    arrs = [t.data[None] if squeeze else t.data for t in (u, delta, B, C)]
    ud, dd, bd, cd = (np.ascontiguousarray(a) for a in arrs)
    ad, sd = A.data, skip.data
    if ad.shape[0] != ud.shape[-1] or bd.shape[-1] != ad.shape[1] or cd.shape != bd.shape:
        raise DimensionError("selective_scan: inconsistent shapes "
                             f"u{u.shape} A{A.shape} B{B.shape} C{C.shape}")
    parents = (u, delta, A, B, C, skip)
    keep = grad_enabled() and any(p.requires_grad for p in parents)
    # the (batch, L, Din, S) decay table only pays off when backward reuses it;
    # without a tape the kernel computes it inline and stays cache resident
    decay = np.exp(dd[..., None] * ad) if keep else None
    y, hs, bad = _kernels.scan_forward(ud, dd, ad, bd, cd, sd, keep, decay)
    if bad >= 0:
        raise ScanError(bad)

    def backward(g):
        g3 = np.ascontiguousarray(g[None] if squeeze else g)
        du, ddel, dA, dB, dC, dskip = _kernels.scan_backward(g3, ud, dd, ad, bd, cd, sd, hs, decay)
        if squeeze:
            du, ddel, dB, dC = du[0], ddel[0], dB[0], dC[0]
        return du, ddel, dA, dB, dC, dskip

    return record(y[0] if squeeze else y, parents, backward, "selective_scan")


# ------------------------------------------------------------ operator glue

def _bind():
    T = Tensor
    T.__add__ = lambda s, o: add(s, o)
    T.__radd__ = lambda s, o: add(o, s)
    T.__sub__ = lambda s, o: sub(s, o)
    T.__rsub__ = lambda s, o: sub(o, s)
    T.__mul__ = lambda s, o: mul(s, o)
    T.__rmul__ = lambda s, o: mul(o, s)
    T.__truediv__ = lambda s, o: div(s, o)
    T.__rtruediv__ = lambda s, o: div(o, s)
    T.__neg__ = lambda s: neg(s)
    T.__matmul__ = lambda s, o: matmul(s, o)
    T.__rmatmul__ = lambda s, o: matmul(o, s)
    T.__getitem__ = lambda s, k: getitem(s, k)
    T.sum = lambda s, axis=None, keepdims=False: sum(s, axis, keepdims)
    T.mean = lambda s, axis=None, keepdims=False: mean(s, axis, keepdims)
    T.reshape = lambda s, *shape: reshape(s, shape[0] if len(shape) == 1 else shape)


_bind()

__all__ = [
    "DimensionError", "ScanError",
    "add", "sub", "mul", "div", "neg", "exp", "log", "square", "relu", "sigmoid",
    "silu", "softplus", "gelu", "matmul", "linear", "sum", "mean", "max",
    "reshape", "transpose", "swapaxes", "concat", "stack", "getitem", "gather",
    "scatter", "layer_norm", "batch_norm", "l2_normalize", "softmax",
    "log_softmax", "cross_entropy", "smooth_l1", "dropout", "depthwise_conv1d",
    "selective_scan",
]
