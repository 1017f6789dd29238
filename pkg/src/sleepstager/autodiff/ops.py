"""Differentiable operations: exactly the set the stager model needs.

Convolution, pooling, the SE scaling primitive and batch normalization all
accept either a single sample ``[C, L]`` or a batch ``[N, C, L]``; the
single-sample form is the batched form with N == 1. Broadcasting is limited
to bias-add and channel-scale by design.
"""

import numpy as np

from ..errors import ContractViolation, InvalidInput, ShapeError, UninitializedState
from .tensor import Tensor, record


def _rg(*tensors):
    return any(t.requires_grad for t in tensors)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} vs {b.data.shape}")
    out = Tensor._wrap(a.data + b.data, _rg(a, b))

    def bwd(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    record(out, bwd)
    return out


def add_rowvec(x, b):
    """Add a bias vector ``b[M]`` to every row of ``x[B, M]``."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ShapeError(f"add_rowvec: {x.data.shape} + {b.data.shape}")
    out = Tensor._wrap(x.data + b.data, _rg(x, b))

    def bwd(g):
        x.accumulate_grad(g)
        b.accumulate_grad(g.sum(axis=0))

    record(out, bwd)
    return out


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} vs {b.data.shape}")
    out = Tensor._wrap(a.data * b.data, _rg(a, b))

    def bwd(g):
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)

    record(out, bwd)
    return out


def scale(x, c):
    """Multiply by a python constant."""
    c = float(c)
    out = Tensor._wrap(x.data * c, x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g * c)

    record(out, bwd)
    return out


def channel_scale(x, s):
    """Per-channel rescaling: ``y[..., c, t] = s[..., c] * x[..., c, t]``."""
    xd, sd = x.data, s.data
    if xd.ndim == 2 and sd.shape == (xd.shape[0],):
        se = sd[:, None]
    elif xd.ndim == 3 and sd.shape == xd.shape[:2]:
        se = sd[:, :, None]
    else:
        raise ShapeError(f"channel_scale: x {xd.shape} vs s {sd.shape}")
    out = Tensor._wrap(xd * se, _rg(x, s))

    def bwd(g):
        x.accumulate_grad(g * se)
        s.accumulate_grad((g * xd).sum(axis=-1))

    record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product ``[m,k] @ [k,n] -> [m,n]`` or ``[m,k] @ [k] -> [m]``."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim not in (1, 2) or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: shapes {ad.shape} vs {bd.shape}")
    out = Tensor._wrap(ad @ bd, _rg(a, b))

    if bd.ndim == 2:

        def bwd(g):
            a.accumulate_grad(g @ bd.T)
            b.accumulate_grad(ad.T @ g)

    else:

        def bwd(g):
            a.accumulate_grad(np.outer(g, bd))
            b.accumulate_grad(ad.T @ g)

    record(out, bwd)
    return out


def transpose(x):
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.data.shape}")
    out = Tensor._wrap(x.data.T, x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g.T)

    record(out, bwd)
    return out


def concat(tensors, axis=-1):
    if not tensors:
        raise InvalidInput("concat of an empty list")
    nd = tensors[0].data.ndim
    if any(t.data.ndim != nd for t in tensors):
        raise ShapeError("concat: rank mismatch")
    out = Tensor._wrap(
        np.concatenate([t.data for t in tensors], axis=axis), _rg(*tensors)
    )
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(g):
        start = 0
        for t, n in zip(tensors, sizes):
            idx = [slice(None)] * nd
            idx[axis] = slice(start, start + n)
            t.accumulate_grad(g[tuple(idx)])
            start += n

    record(out, bwd)
    return out


def reshape(x, shape):
    out = Tensor._wrap(x.data.reshape(shape), x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g.reshape(x.data.shape))

    record(out, bwd)
    return out


def take_rows(x, indices):
    """Gather rows along axis 0; duplicate indices accumulate gradients."""
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor._wrap(x.data[idx], x.requires_grad)

    def bwd(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, idx, g)

    record(out, bwd)
    return out


def select_row(x, index):
    """Single-row view (shares memory with the parent tensor's data)."""
    i = int(index)
    out = Tensor._wrap(x.data[i], x.requires_grad)

    def bwd(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[i] += g

    record(out, bwd)
    return out


def take_per_row(x, indices):
    """``y[b] = x[b, indices[b]]`` for a matrix ``x[B, C]``."""
    idx = np.asarray(indices, dtype=np.intp)
    if x.data.ndim != 2 or idx.shape != (x.data.shape[0],):
        raise ShapeError(f"take_per_row: x {x.data.shape}, idx {idx.shape}")
    rows = np.arange(x.data.shape[0])
    out = Tensor._wrap(x.data[rows, idx], x.requires_grad)

    def bwd(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, (rows, idx), g)

    record(out, bwd)
    return out


def sum_all(x):
    out = Tensor._wrap(np.asarray(x.data.sum()), x.requires_grad)

    def bwd(g):
        x.accumulate_grad(np.broadcast_to(g, x.data.shape))

    record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# activations


def relu(x):
    out = Tensor._wrap(np.maximum(x.data, 0.0), x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g * (x.data > 0))

    record(out, bwd)
    return out


def sigmoid(x):
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor._wrap(y, x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g * y * (1.0 - y))

    record(out, bwd)
    return out


def tanh(x):
    y = np.tanh(x.data)
    out = Tensor._wrap(y, x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g * (1.0 - y * y))

    record(out, bwd)
    return out


def log_softmax(x, axis=-1):
    xd = x.data
    if not (-xd.ndim <= axis < xd.ndim):
        raise ShapeError(f"log_softmax: axis {axis} invalid for shape {xd.shape}")
    m = xd.max(axis=axis, keepdims=True)
    z = xd - m
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = Tensor._wrap(y, x.requires_grad)

    def bwd(g):
        x.accumulate_grad(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    record(out, bwd)
    return out


def activation(x, kind, axis=None):
    """Dispatch on the activation name used throughout the model."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "log_softmax":
        return log_softmax(x, axis=-1 if axis is None else axis)
    raise ContractViolation(f"unknown activation kind: {kind!r}")


# ---------------------------------------------------------------------------
# convolution and pooling


def _as_batched(x):
    """Promote [C, L] to [1, C, L]; report whether promotion happened."""
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected [C,L] or [N,C,L], got {x.shape}")


def _im2col(xp, k, stride, l_out):
    """Unfold to [N, C*K, L_out]; per-sample GEMMs keep results independent
    of batch composition (bit-exact batch equivariance)."""
    n, c, _ = xp.shape
    sn, sc, sl = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(n, c, k, l_out), strides=(sn, sc, sl, sl * stride)
    )
    return np.ascontiguousarray(windows).reshape(n, c * k, l_out)


def conv1d(x, w, b=None, stride=1, padding=0):
    """1-D cross-correlation with optional bias.

    ``x[(N,)C_in,L]``, ``w[C_out,C_in,K]``, ``b[C_out]`` ->
    ``[(N,)C_out,L_out]`` with L_out = floor((L + 2*padding - K)/stride) + 1.
    ``b=None`` skips the bias (used where batchnorm follows and would
    absorb it).
    """
    xd, squeezed = _as_batched(x.data)
    if w.data.ndim != 3:
        raise ShapeError(f"conv1d: weight must be [C_out,C_in,K], got {w.data.shape}")
    n, c_in, l = xd.shape
    c_out, c_in_w, k = w.data.shape
    if c_in_w != c_in:
        raise ShapeError(f"conv1d: input channels {c_in} vs weight {c_in_w}")
    if b is not None and b.data.shape != (c_out,):
        raise ShapeError(f"conv1d: bias shape {b.data.shape}, expected ({c_out},)")
    lp = l + 2 * padding
    if lp < k:
        raise ShapeError(f"conv1d: kernel {k} larger than padded input {lp}")
    l_out = (lp - k) // stride + 1
    if padding:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding)))
    else:
        xp = np.ascontiguousarray(xd)
    patches = _im2col(xp, k, stride, l_out)
    w2 = w.data.reshape(c_out, c_in * k)
    y = np.matmul(w2, patches)  # [N, C_out, L_out]
    if b is not None:
        y += b.data[:, None]
    out = Tensor._wrap(y[0] if squeezed else y, _rg(*((x, w, b) if b is not None else (x, w))))

    def bwd(g):
        gd = g[None] if squeezed else g
        if b is not None:
            b.accumulate_grad(gd.sum(axis=(0, 2)))
        w.accumulate_grad(
            np.matmul(gd, patches.transpose(0, 2, 1)).sum(axis=0).reshape(
                c_out, c_in, k
            )
        )
        if x.requires_grad:
            dpat = np.matmul(w2.T, gd).reshape(n, c_in, k, l_out)
            dxp = np.zeros_like(xp)
            for kk in range(k):
                dxp[:, :, kk : kk + stride * l_out : stride] += dpat[:, :, kk, :]
            dx = dxp[:, :, padding : padding + l] if padding else dxp
            x.accumulate_grad(dx[0] if squeezed else dx)

    record(out, bwd)
    return out


def global_avg_pool(x):
    """Average over the time axis: ``[(N,)C,L] -> [(N,)C]``."""
    xd = x.data
    if xd.ndim not in (2, 3):
        raise ShapeError(f"global_avg_pool: expected [C,L] or [N,C,L], got {xd.shape}")
    l = xd.shape[-1]
    out = Tensor._wrap(xd.mean(axis=-1), x.requires_grad)

    def bwd(g):
        x.accumulate_grad(np.repeat(g[..., None], l, axis=-1) / l)

    record(out, bwd)
    return out


def max_pool1d(x, k, stride):
    """Max pooling; gradient routes to the first maximal index of each window."""
    xd, squeezed = _as_batched(x.data)
    n, c, l = xd.shape
    if l < k:
        raise ShapeError(f"max_pool1d: window {k} exceeds length {l}")
    l_out = (l - k) // stride + 1
    sn, sc, sl = xd.strides if xd.flags.c_contiguous else np.ascontiguousarray(xd).strides
    xc = xd if xd.flags.c_contiguous else np.ascontiguousarray(xd)
    windows = np.lib.stride_tricks.as_strided(
        xc, shape=(n, c, l_out, k), strides=(sn, sc, sl * stride, sl)
    )
    arg = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    out = Tensor._wrap(y[0] if squeezed else y, x.requires_grad)

    def bwd(g):
        if not x.requires_grad:
            return
        gd = g[None] if squeezed else g
        dx = np.zeros((n, c, l))
        ni, ci, ti = np.indices(arg.shape)
        np.add.at(dx, (ni, ci, ti * stride + arg), gd)
        x.accumulate_grad(dx[0] if squeezed else dx)

    record(out, bwd)
    return out


def pool1d(x, kind, k=None, stride=None):
    if kind == "global_avg":
        return global_avg_pool(x)
    if kind == "max":
        if k is None or stride is None:
            raise ContractViolation("max pooling needs k and stride")
        return max_pool1d(x, k, stride)
    raise ContractViolation(f"unknown pool kind: {kind!r}")


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Running statistics for one batchnorm layer (mutated in train mode)."""

    __slots__ = ("running_mean", "running_var", "initialized")

    def __init__(self, channels):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.initialized = False


def batchnorm1d(x, gamma, beta, state, mode, momentum=0.1, eps=1e-5):
    """Per-channel normalization over the (batch, time) axes.

    Train mode normalizes by batch statistics and folds them into the
    running state; eval mode applies the stored running statistics.
    """
    xd, squeezed = _as_batched(x.data)
    n, c, l = xd.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm1d: {c} channels, gamma {gamma.data.shape}")
    if mode == "train":
        m = n * l
        if m < 2:
            raise InvalidInput("batchnorm train mode needs N*L >= 2")
        mean = xd.mean(axis=(0, 2))
        var = xd.var(axis=(0, 2))
        state.running_mean = (1 - momentum) * state.running_mean + momentum * mean
        unbiased = var * m / (m - 1)
        state.running_var = (1 - momentum) * state.running_var + momentum * unbiased
        state.initialized = True
    elif mode == "eval":
        if not state.initialized:
            raise UninitializedState("batchnorm eval before any train step")
        m = None
        mean = state.running_mean
        var = state.running_var
    else:
        raise ContractViolation(f"unknown batchnorm mode: {mode!r}")

    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[:, None]) * ivar[:, None]
    y = gamma.data[:, None] * xhat + beta.data[:, None]
    out = Tensor._wrap(y[0] if squeezed else y, _rg(x, gamma, beta))

    def bwd(g):
        gd = g[None] if squeezed else g
        gamma.accumulate_grad((gd * xhat).sum(axis=(0, 2)))
        beta.accumulate_grad(gd.sum(axis=(0, 2)))
        if not x.requires_grad:
            return
        dxhat = gd * gamma.data[:, None]
        if mode == "eval":
            dx = dxhat * ivar[:, None]
        else:
            s1 = dxhat.sum(axis=(0, 2), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
            dx = (ivar[:, None] / m) * (m * dxhat - s1 - xhat * s2)
        x.accumulate_grad(dx[0] if squeezed else dx)

    record(out, bwd)
    return out
