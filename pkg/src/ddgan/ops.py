"""Differentiable network operations: convolutions, resampling, dense, batch norm.

Convolution and transposed convolution share one im2col/col2im core so that
``deconv2d`` is the exact adjoint of ``conv2d`` for the same kernel, stride
and padding. All ops preserve the input floating dtype.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .rng import Rng
from .tensor import Tensor


def _conv_geometry(op, h, w, k, stride, padding):
    if stride < 1:
        raise ShapeError(op, "stride", ">= 1", stride)
    if padding < 0:
        raise ShapeError(op, "padding", ">= 0", padding)
    if h + 2 * padding < k or w + 2 * padding < k:
        raise ShapeError(op, "spatial axis", f">= kernel extent {k}", (h, w))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    return ho, wo


def _pad2d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp, k, stride, ho, wo):
    """Patch matrix of a padded NCHW array: (N*Ho*Wo, C*K*K)."""
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    # transpose puts the GEMM reduction axis (C, K, K) last and contiguous
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(xp.shape[0] * ho * wo, -1)


def _col2im(cols, n, c, h, w, k, stride, padding, ho, wo, dtype):
    """Adjoint of ``_im2col``: scatter-add patches back onto the image grid."""
    hp, wp = h + 2 * padding, w + 2 * padding
    buf = np.zeros((n, c, hp, wp), dtype=dtype)
    patches = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for u in range(k):
        for v in range(k):
            buf[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += (
                patches[:, :, :, :, u, v]
            )
    if padding == 0:
        return buf
    return buf[:, :, padding:hp - padding, padding:wp - padding]


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2-D convolution (cross-correlation), NCHW input, OIKK kernel."""
    xd, kd, bd = x.data, kernel.data, bias.data
    if xd.ndim != 4:
        raise ShapeError("conv2d", "input ndim", 4, xd.ndim)
    if kd.ndim != 4 or kd.shape[2] != kd.shape[3]:
        raise ShapeError("conv2d", "kernel", "OIKK with square K", kd.shape)
    n, c, h, w = xd.shape
    o, ci, k, _ = kd.shape
    if ci != c:
        raise ShapeError("conv2d", "input channel axis", ci, c)
    if bd.shape != (o,):
        raise ShapeError("conv2d", "bias axis", (o,), bd.shape)
    ho, wo = _conv_geometry("conv2d", h, w, k, stride, padding)

    cols = _im2col(_pad2d(xd, padding), k, stride, ho, wo)
    kmat = kd.reshape(o, -1)
    out = (cols @ kmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    out = out + bd[None, :, None, None]

    def vjp_x(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        return _col2im(g2 @ kmat, n, c, h, w, k, stride, padding, ho, wo, xd.dtype)

    def vjp_k(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        return (g2.T @ cols).reshape(kd.shape)

    def vjp_b(g):
        return g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, [(x, vjp_x), (kernel, vjp_k), (bias, vjp_b)])


def deconv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1,
             padding: int = 0) -> Tensor:
    """Transposed convolution; adjoint of ``conv2d`` with the same kernel.

    Input is NCHW, kernel is (C_in, C_out, K, K); output extent is
    (H - 1) * stride - 2 * padding + K.
    """
    xd, kd, bd = x.data, kernel.data, bias.data
    if xd.ndim != 4:
        raise ShapeError("deconv2d", "input ndim", 4, xd.ndim)
    if kd.ndim != 4 or kd.shape[2] != kd.shape[3]:
        raise ShapeError("deconv2d", "kernel", "(C_in, C_out, K, K) with square K",
                         kd.shape)
    n, c, h, w = xd.shape
    ci, co, k, _ = kd.shape
    if ci != c:
        raise ShapeError("deconv2d", "input channel axis", ci, c)
    if bd.shape != (co,):
        raise ShapeError("deconv2d", "bias axis", (co,), bd.shape)
    if stride < 1:
        raise ShapeError("deconv2d", "stride", ">= 1", stride)
    hout = (h - 1) * stride - 2 * padding + k
    wout = (w - 1) * stride - 2 * padding + k
    if hout < 1 or wout < 1:
        raise ShapeError("deconv2d", "output spatial axis", ">= 1", (hout, wout))

    kmat = kd.reshape(c, -1)                      # (C_in, C_out*K*K)
    x2 = xd.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    cols = x2 @ kmat                              # (N*H*W, C_out*K*K)
    out = _col2im(cols, n, co, hout, wout, k, stride, padding, h, w, xd.dtype)
    out = out + bd[None, :, None, None]

    def vjp_x(g):
        gcols = _im2col(_pad2d(g, padding), k, stride, h, w)
        return (gcols @ kmat.T).reshape(n, h, w, c).transpose(0, 3, 1, 2)

    def vjp_k(g):
        gcols = _im2col(_pad2d(g, padding), k, stride, h, w)
        return (x2.T @ gcols).reshape(kd.shape)

    def vjp_b(g):
        return g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, [(x, vjp_x), (kernel, vjp_k), (bias, vjp_b)])


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel factor x factor; gradient sums the replicas."""
    if factor < 1:
        raise ShapeError("upsample_nearest", "factor", ">= 1", factor)
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError("upsample_nearest", "input ndim", 4, xd.ndim)
    n, c, h, w = xd.shape
    out = np.repeat(np.repeat(xd, factor, axis=2), factor, axis=3)

    def vjp(g):
        return g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))

    return Tensor._from_op(out, [(x, vjp)])


def downsample_avg(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping factor x factor mean pooling."""
    if factor < 1:
        raise ShapeError("downsample_avg", "factor", ">= 1", factor)
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError("downsample_avg", "input ndim", 4, xd.ndim)
    n, c, h, w = xd.shape
    if h % factor or w % factor:
        raise ShapeError("downsample_avg", "spatial axis",
                         f"divisible by {factor}", (h, w))
    ho, wo = h // factor, w // factor
    out = xd.reshape(n, c, ho, factor, wo, factor).mean(axis=(3, 5), dtype=xd.dtype)
    inv = 1.0 / (factor * factor)

    def vjp(g):
        g = np.broadcast_to(g[:, :, :, None, :, None],
                            (n, c, ho, factor, wo, factor))
        return (g * inv).reshape(n, c, h, w).astype(xd.dtype)

    return Tensor._from_op(out, [(x, vjp)])


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: (N, F) @ (F, G) + (G,)."""
    if x.data.ndim != 2:
        raise ShapeError("dense", "input ndim", 2, x.data.ndim)
    if x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError("dense", "feature axis", weight.data.shape[0],
                         x.data.shape[1])
    if bias.data.shape != (weight.data.shape[1],):
        raise ShapeError("dense", "bias axis", (weight.data.shape[1],),
                         bias.data.shape)
    return x @ weight + bias


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return x.leaky_relu(slope)


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               epsilon: float = 1e-5, momentum: float = 0.9,
               training: bool = True) -> Tensor:
    """Normalize over the channel axis (axis 1 of 2-D or 4-D input).

    Training mode normalizes with the minibatch statistics (biased variance)
    and folds them into the running buffers in place; inference mode uses the
    running buffers as constants.
    """
    xd = x.data
    if xd.ndim not in (2, 4):
        raise ShapeError("batch_norm", "input ndim", "2 or 4", xd.ndim)
    ch = xd.shape[1]
    if gamma.data.shape != (ch,) or beta.data.shape != (ch,):
        raise ShapeError("batch_norm", "channel axis", (ch,),
                         (gamma.data.shape, beta.data.shape))
    axes = (0,) if xd.ndim == 2 else (0, 2, 3)
    bshape = (1, ch) if xd.ndim == 2 else (1, ch, 1, 1)

    if training:
        mu = x.mean(axis=axes, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        running_mean[:] = momentum * running_mean + (1.0 - momentum) * (
            mu.data.reshape(ch).astype(running_mean.dtype))
        running_var[:] = momentum * running_var + (1.0 - momentum) * (
            var.data.reshape(ch).astype(running_var.dtype))
        xhat = xc / (var + epsilon).sqrt()
    else:
        mu = running_mean.reshape(bshape).astype(xd.dtype)
        sd = np.sqrt(running_var.reshape(bshape).astype(xd.dtype) + epsilon)
        xhat = (x - mu) * (1.0 / sd)
    return xhat * gamma.reshape(bshape) + beta.reshape(bshape)


def sample_normal(rng: Rng, shape, dtype=np.float32) -> Tensor:
    """Standard-normal tensor; deterministic per rng stream state."""
    return Tensor(rng.normal(shape, dtype=dtype))
