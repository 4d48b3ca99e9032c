"""Differentiable array ops: convolution, pooling, upsampling, activations,
channel concat, and the dice loss.

Everything here is stride-1 / same-padding convolution territory, which
allows one structural trick that makes from-scratch convolution fast: on
the zero-padded grid, every kernel offset is a single *contiguous* shift
of the flattened array. The im2col matrix is therefore built from plain
memcpys (no gathers), one BLAS matmul produces all outputs over the
padded grid, and the rows that correspond to wrapped (garbage) positions
are simply cropped away afterwards. Gradients reuse the same machinery:
the input gradient of a same-pad correlation is a same-pad correlation
with the channel-swapped, spatially flipped kernel, and the weight
gradient is one matmul between the column matrix and the (zero-embedded)
output gradient.

Column blocks are capped at a fixed byte budget and processed in
(batch, leading-spatial) chunks so 64-cube inputs don't blow memory.

Set ``CHECK_FINITE = True`` to assert every op output is finite (used by
the test suite; off by default in the hot path).
"""

from __future__ import annotations

import itertools

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import NumericError, ParameterError, ShapeError, StateError, ValidationError
from . import numba_kernels as nk_kernels

CHECK_FINITE = False

_COL_BUDGET_BYTES = 96 * 2**20


def _guard(name: str, *arrays):
    if CHECK_FINITE:
        for a in arrays:
            if not np.isfinite(a).all():
                raise NumericError(f"{name} produced non-finite values")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _conv_checks(x, w, b):
    nd = x.ndim - 2
    if nd not in (2, 3):
        raise ShapeError(f"input must be (B, C, *spatial) with 2 or 3 spatial dims, got {x.shape}")
    if w.ndim != nd + 2:
        raise ShapeError(f"kernel rank {w.shape} does not match input rank {x.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(
            f"channel mismatch: input {x.shape} has {x.shape[1]} channels, "
            f"kernel {w.shape} expects {w.shape[1]}"
        )
    if any(k % 2 == 0 for k in w.shape[2:]):
        raise ParameterError(f"kernel dims must be odd, got {w.shape[2:]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match c_out {w.shape[0]}")
    return nd


def _zero_pad_spatial(x, K):
    """Zero padding by k//2 per spatial axis (np.pad without the per-edge
    machinery; this sits on the hot path)."""
    nd = x.ndim - 2
    shape = x.shape[:2] + tuple(s + K[d] - 1 for d, s in enumerate(x.shape[2:]))
    xp = np.zeros(shape, dtype=x.dtype)
    inner = (slice(None), slice(None)) + tuple(
        slice(k // 2, k // 2 + s) for k, s in zip(K, x.shape[2:])
    )
    xp[inner] = x
    return xp


def _conv_core(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-padding stride-1 cross-correlation (optional fused bias)."""
    nd = x.ndim - 2
    B, cin = x.shape[:2]
    S = x.shape[2:]
    cout = w.shape[0]
    K = w.shape[2:]
    nk = int(np.prod(K))
    dtype = x.dtype

    if nk == 1:
        # pointwise conv: a single channel contraction
        out = np.tensordot(w.reshape(cout, cin), x, axes=([1], [1]))
        out = np.ascontiguousarray(np.moveaxis(out, 1, 0))
        if bias is not None:
            out += bias.reshape((1, -1) + (1,) * nd)
        return out

    xp = _zero_pad_spatial(x, K)

    if (
        nk_kernels.HAS_NUMBA
        and dtype == np.float32
        and all(k == 3 for k in K)
    ):
        out = np.empty((B, cout) + S, dtype=dtype)
        wc = np.ascontiguousarray(w, dtype=np.float32)
        bc = (
            np.zeros(cout, dtype=np.float32)
            if bias is None
            else np.ascontiguousarray(bias, dtype=np.float32)
        )
        # in-place accumulation wins while an output channel stays cache
        # resident; beyond ~32^3 the streaming kernel takes over
        rmw = int(np.prod(S)) <= 32768
        if nd == 3:
            (nk_kernels.conv3d_k3_rmw if rmw else nk_kernels.conv3d_k3)(xp, wc, bc, out)
        else:
            (nk_kernels.conv2d_k3_rmw if rmw else nk_kernels.conv2d_k3)(xp, wc, bc, out)
        return out

    P = xp.shape[2:]
    w2 = np.ascontiguousarray(w.reshape(cout, cin * nk), dtype=dtype)
    out = np.empty((B, cout) + S, dtype=dtype)

    per_sample = cin * nk * int(np.prod(P)) * dtype.itemsize
    b_chunk = max(1, min(B, _COL_BUDGET_BYTES // max(per_sample, 1)))
    z_chunk = S[0]
    if b_chunk == 1 and per_sample > _COL_BUDGET_BYTES:
        z_chunk = max(1, int(S[0] * _COL_BUDGET_BYTES / per_sample))

    for b0 in range(0, B, b_chunk):
        b1 = min(b0 + b_chunk, B)
        for z0 in range(0, S[0], z_chunk):
            z1 = min(z0 + z_chunk, S[0])
            _conv_block(xp, w2, out, b0, b1, z0, z1, S, K)
    if bias is not None:
        out += bias.reshape((1, -1) + (1,) * nd)
    return out


def _conv_block(xp, w2, out, b0, b1, z0, z1, S, K):
    """One (batch, leading-axis) block: build col by flat shifts, matmul, crop."""
    nd = len(S)
    cin = xp.shape[1]
    nk = w2.shape[1] // cin
    dtype = xp.dtype
    # padded slab covering output rows [z0, z1)
    slab = xp[:, :, z0:z1 + K[0] - 1] if nd >= 1 else xp
    slab = slab[b0:b1]
    Ps = slab.shape[2:]
    npd = int(np.prod(Ps))
    strides = [int(np.prod(Ps[d + 1:])) for d in range(nd)]
    span = npd - sum((K[d] - 1) * strides[d] for d in range(nd))
    nb = b1 - b0
    flat = np.ascontiguousarray(slab).reshape(nb, cin, npd)
    col = np.empty((nb, cin, nk, span), dtype=dtype)
    for i, off in enumerate(itertools.product(*[range(k) for k in K])):
        s0 = sum(off[d] * strides[d] for d in range(nd))
        col[:, :, i, :] = flat[:, :, s0:s0 + span]
    res = np.matmul(w2, col.reshape(nb, cin * nk, span))
    # valid outputs live at flat positions with padded-grid strides
    Sb = (z1 - z0,) + tuple(S[1:])
    view = as_strided(
        res,
        shape=(nb, w2.shape[0]) + Sb,
        strides=(res.strides[0], res.strides[1])
        + tuple(st * res.itemsize for st in strides),
    )
    out[b0:b1, :, z0:z1] = view


def conv_forward(x, w, b, stride: int = 1, pad: str = "same"):
    """Cross-correlation preserving spatial dims. Returns (out, cache)."""
    if stride != 1 or pad != "same":
        raise ParameterError("only stride=1 with 'same' padding is supported")
    _conv_checks(x, w, b)
    out = _conv_core(x, w, bias=b)
    _guard("conv_forward", out)
    return out, (x, w)


def conv_backward(grad_out, cache):
    """Gradients of conv_forward; returns (grad_x, grad_w, grad_b)."""
    if cache is None:
        raise StateError("conv_backward requires the forward cache")
    x, w = cache
    if grad_out.shape[1] != w.shape[0] or grad_out.shape[0] != x.shape[0]:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} inconsistent with forward "
            f"x {x.shape}, w {w.shape}"
        )
    nd = x.ndim - 2
    spatial_axes = tuple(range(2, 2 + nd))
    grad_b = grad_out.sum(axis=(0,) + spatial_axes, dtype=np.float64).astype(x.dtype)

    # input gradient: same-pad correlation with channel-swapped flipped kernel
    w_rt = np.ascontiguousarray(np.flip(w, axis=spatial_axes).swapaxes(0, 1))
    grad_x = _conv_core(grad_out, w_rt)

    grad_w = _conv_weight_grad(x, w, grad_out)
    _guard("conv_backward", grad_x, grad_w, grad_b)
    return grad_x, grad_w, grad_b


def _conv_weight_grad(x, w, grad_out):
    nd = x.ndim - 2
    B, cin = x.shape[:2]
    S = x.shape[2:]
    cout = w.shape[0]
    K = w.shape[2:]
    nk = int(np.prod(K))
    dtype = x.dtype

    if nk == 1:
        axes = (0,) + tuple(range(2, 2 + nd))
        gw = np.tensordot(grad_out, x, axes=(axes, axes))
        return gw.reshape(w.shape).astype(dtype)

    xp = _zero_pad_spatial(x, K)

    if (
        nk_kernels.HAS_NUMBA
        and dtype == np.float32
        and all(k == 3 for k in K)
    ):
        gw = np.zeros(w.shape, dtype=np.float32)
        g = np.ascontiguousarray(grad_out, dtype=np.float32)
        if nd == 3:
            nk_kernels.convw3d_k3(xp, g, gw)
        else:
            nk_kernels.convw2d_k3(xp, g, gw)
        return gw
    P = xp.shape[2:]
    per_sample = cin * nk * int(np.prod(P)) * dtype.itemsize
    b_chunk = max(1, min(B, _COL_BUDGET_BYTES // max(per_sample, 1)))
    z_chunk = S[0]
    if b_chunk == 1 and per_sample > _COL_BUDGET_BYTES:
        z_chunk = max(1, int(S[0] * _COL_BUDGET_BYTES / per_sample))

    gw2 = np.zeros((cout, cin * nk), dtype=np.float64)
    for b0 in range(0, B, b_chunk):
        b1 = min(b0 + b_chunk, B)
        for z0 in range(0, S[0], z_chunk):
            z1 = min(z0 + z_chunk, S[0])
            slab = np.ascontiguousarray(xp[b0:b1, :, z0:z1 + K[0] - 1])
            nb = b1 - b0
            Ps = slab.shape[2:]
            npd = int(np.prod(Ps))
            strides = [int(np.prod(Ps[d + 1:])) for d in range(nd)]
            span = npd - sum((K[d] - 1) * strides[d] for d in range(nd))
            flat = slab.reshape(nb, cin, npd)
            col = np.empty((nb, cin, nk, span), dtype=dtype)
            for i, off in enumerate(itertools.product(*[range(k) for k in K])):
                s0 = sum(off[d] * strides[d] for d in range(nd))
                col[:, :, i, :] = flat[:, :, s0:s0 + span]
            # embed grad_out block at valid flat positions, zeros elsewhere
            gflat = np.zeros((nb, cout, span), dtype=dtype)
            Sb = (z1 - z0,) + tuple(S[1:])
            view = as_strided(
                gflat,
                shape=(nb, cout) + Sb,
                strides=(gflat.strides[0], gflat.strides[1])
                + tuple(st * gflat.itemsize for st in strides),
            )
            view[...] = grad_out[b0:b1, :, z0:z1]
            gw2 += np.matmul(
                gflat, col.reshape(nb, cin * nk, span).transpose(0, 2, 1)
            ).sum(axis=0)
    return gw2.reshape(w.shape).astype(dtype)


# ---------------------------------------------------------------------------
# pooling / upsampling / concat / activations
# ---------------------------------------------------------------------------


def _window_split(x):
    """Reshape (B, C, 2m, 2n, ...) into (B, C, m, n, ..., 2**nd) windows
    whose last-axis order matches the scan order of the original array."""
    nd = x.ndim - 2
    B, C = x.shape[:2]
    S = x.shape[2:]
    shape = (B, C) + tuple(v for s in S for v in (s // 2, 2))
    xr = x.reshape(shape)
    # move the window axes (3, 5, [7]) to the end, keeping their order
    order = [0, 1] + [2 + 2 * d for d in range(nd)] + [3 + 2 * d for d in range(nd)]
    xt = xr.transpose(order)
    return xt.reshape(xt.shape[:2 + nd] + (2 ** nd,)), shape, order


def maxpool_forward(x):
    """2x window, stride-2 max pool; ties go to the first index in scan order."""
    nd = x.ndim - 2
    S = x.shape[2:]
    if any(s % 2 for s in S):
        raise ShapeError(f"max-pool needs even spatial dims, got {S}")
    if nk_kernels.HAS_NUMBA and x.dtype == np.float32 and x.flags.c_contiguous:
        out = np.empty(x.shape[:2] + tuple(s // 2 for s in S), dtype=x.dtype)
        (nk_kernels.maxpool3d if nd == 3 else nk_kernels.maxpool2d)(x, out)
    else:
        shape = x.shape[:2] + tuple(v for s in S for v in (s // 2, 2))
        out = x.reshape(shape)
        for d in reversed(range(nd)):  # reduce innermost factor-2 axes first
            out = out.max(axis=3 + 2 * d)
    _guard("maxpool_forward", out)
    return out, x


def maxpool_backward(grad_out, cache):
    if cache is None:
        raise StateError("maxpool_backward requires the forward cache")
    x = cache
    nd = x.ndim - 2
    win, shape, order = _window_split(x)
    am = np.argmax(win, axis=-1)
    gwin = np.zeros(grad_out.shape + (2 ** nd,), dtype=grad_out.dtype)
    np.put_along_axis(gwin, am[..., None], grad_out[..., None], axis=-1)
    gt = gwin.reshape(gwin.shape[:-1] + (2,) * nd)
    inv = np.argsort(order)
    gx = gt.transpose(inv).reshape(x.shape)
    return np.ascontiguousarray(gx)


def upsample_forward(x):
    """Nearest-neighbour x2 along every spatial axis."""
    nd = x.ndim - 2
    if nk_kernels.HAS_NUMBA and x.dtype == np.float32 and x.flags.c_contiguous:
        out = np.empty(x.shape[:2] + tuple(2 * s for s in x.shape[2:]), dtype=x.dtype)
        (nk_kernels.upsample3d if nd == 3 else nk_kernels.upsample2d)(x, out)
    else:
        out = x
        for ax in range(2, x.ndim):
            out = np.repeat(out, 2, axis=ax)
    _guard("upsample_forward", out)
    return out, x.shape


def upsample_backward(grad_out, cache):
    if cache is None:
        raise StateError("upsample_backward requires the forward cache")
    x_shape = cache
    nd = len(x_shape) - 2
    g = grad_out
    shape = x_shape[:2] + tuple(v for s in x_shape[2:] for v in (s, 2))
    g = g.reshape(shape)
    for d in range(nd):
        g = g.sum(axis=3 + 2 * d - d)  # collapse the factor-2 axes left to right
    return np.ascontiguousarray(g)


def concat_forward(a, b):
    """Concatenate along channels; spatial dims must match."""
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(grad_out, cache):
    if cache is None:
        raise StateError("concat_backward requires the forward cache")
    ca = cache
    return grad_out[:, :ca], grad_out[:, ca:]


def relu_forward(x):
    out = np.maximum(x, 0)
    return out, x  # mask derived lazily in backward


def relu_backward(grad_out, cache):
    if cache is None:
        raise StateError("relu_backward requires the forward cache")
    return grad_out * (cache > 0)


def sigmoid_forward(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    _guard("sigmoid_forward", out)
    return out, out


def sigmoid_backward(grad_out, cache):
    if cache is None:
        raise StateError("sigmoid_backward requires the forward cache")
    y = cache
    return grad_out * y * (1.0 - y)


# ---------------------------------------------------------------------------
# dice loss
# ---------------------------------------------------------------------------


def dice_loss(pred, target, smooth: float = 1.0):
    """Soft dice loss, per-sample then batch-averaged. Returns (loss, grad).

    loss_i = 1 - (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth),
    summed over everything but the batch axis.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    tgt = np.asarray(target)
    if not np.isin(tgt, (0, 1)).all():
        raise ValidationError("dice loss target must be binary")
    tgt = tgt.astype(pred.dtype, copy=False)
    axes = tuple(range(1, pred.ndim))
    inter = (pred * tgt).sum(axis=axes, dtype=np.float64)
    psum = pred.sum(axis=axes, dtype=np.float64)
    gsum = tgt.sum(axis=axes, dtype=np.float64)
    num = 2.0 * inter + smooth
    den = psum + gsum + smooth
    B = pred.shape[0]
    loss = float(np.mean(1.0 - num / den))
    if not np.isfinite(loss):
        raise NumericError("dice loss is non-finite")
    shape = (B,) + (1,) * (pred.ndim - 1)
    grad = -(2.0 * tgt * den.reshape(shape) - num.reshape(shape)) / (
        den.reshape(shape) ** 2
    )
    grad /= B
    return loss, grad.astype(pred.dtype)
