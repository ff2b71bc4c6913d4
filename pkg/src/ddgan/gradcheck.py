"""Finite-difference verification of every differentiable operation.

Each case builds a scalar loss from random float64 inputs, computes analytic
gradients with ``backward()`` and compares them against central finite
differences (h = 1e-3). The error measure is elementwise
|analytic - numeric| / max(1, |analytic|, |numeric|), so it is relative for
large gradients and absolute near zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .rng import Rng
from .tensor import Tensor, concat

FD_STEP = 1e-3
FD_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err <= self.tol


def finite_difference(fn, arrays, h: float = FD_STEP):
    """Central finite-difference gradients of ``fn(arrays) -> float``."""
    grads = []
    for i in range(len(arrays)):
        work = [a.copy() for a in arrays]
        flat = work[i].reshape(-1)
        g = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = fn(work)
            flat[j] = orig - h
            fm = fn(work)
            flat[j] = orig
            g[j] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(arrays[i].shape))
    return grads


def check_case(build, arrays, h: float = FD_STEP) -> float:
    """Max elementwise error between analytic and numeric gradients."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(tensors)
    loss.backward()

    def value(arrs):
        return float(build([Tensor(a) for a in arrs]).data)

    numeric = finite_difference(value, arrays, h)
    worst = 0.0
    for t, fd in zip(tensors, numeric):
        ana = t.grad if t.grad is not None else np.zeros_like(fd)
        scale = np.maximum(1.0, np.maximum(np.abs(ana), np.abs(fd)))
        worst = max(worst, float(np.max(np.abs(ana - fd) / scale)))
    return worst


def _randn(rng, *shape):
    return rng.normal(shape, dtype=np.float64)


def _case_registry():
    """name -> (make(seed) -> (build, arrays)). Inputs avoid kinks/poles."""

    def elementwise(op):
        def make(seed):
            rng = Rng(seed)
            x = _randn(rng, 3, 4)
            y = _randn(rng, 3, 4)
            builds = {
                "add": lambda t: (t[0] + t[1]).sum(),
                "sub": lambda t: (t[0] - t[1]).sum(),
                "mul": lambda t: (t[0] * t[1]).sum(),
                "div": lambda t: (t[0] / t[1]).sum(),
                "neg": lambda t: (-t[0] * t[1]).sum(),
            }
            if op == "div":
                y = y + np.sign(y) * 2.0 + np.where(y == 0, 2.0, 0.0)
            return builds[op], [x, y]
        return make

    def broadcast_add(seed):
        rng = Rng(seed)
        return (lambda t: ((t[0] + t[1]) * (t[0] * t[1])).sum(),
                [_randn(rng, 2, 3, 4), _randn(rng, 1, 3, 1)])

    def pow_(seed):
        rng = Rng(seed)
        x = np.abs(_randn(rng, 3, 3)) + 0.5
        return lambda t: (t[0] ** 3 + t[0] ** -1).sum(), [x]

    def matmul(seed):
        rng = Rng(seed)
        return (lambda t: ((t[0] @ t[1]) ** 2).sum(),
                [_randn(rng, 3, 4), _randn(rng, 4, 2)])

    def sum_axis(seed):
        rng = Rng(seed)
        return (lambda t: (t[0].sum(axis=(0, 2), keepdims=True) ** 2).sum(),
                [_randn(rng, 2, 3, 4)])

    def mean_axis(seed):
        rng = Rng(seed)
        return (lambda t: (t[0].mean(axis=1) ** 2).sum(), [_randn(rng, 3, 5)])

    def unary(name):
        def make(seed):
            rng = Rng(seed)
            x = _randn(rng, 3, 4)
            if name in ("log", "sqrt"):
                x = np.abs(x) + 0.5
            if name == "leaky_relu":
                x = x + np.sign(x) * 0.1 + np.where(x == 0, 0.1, 0.0)
            builds = {
                "log": lambda t: t[0].log().sum(),
                "exp": lambda t: t[0].exp().sum(),
                "sqrt": lambda t: t[0].sqrt().sum(),
                "tanh": lambda t: t[0].tanh().sum(),
                "sigmoid": lambda t: t[0].sigmoid().sum(),
                "leaky_relu": lambda t: t[0].leaky_relu(0.2).sum(),
            }
            return builds[name], [x]
        return make

    def clip_(seed):
        rng = Rng(seed)
        # keep samples > FD_STEP away from the clip bounds so the
        # subgradient matches the difference quotient
        x = _randn(rng, 4, 4) * 0.3
        x = np.clip(x, -0.9, 0.9)
        x = np.where(np.abs(np.abs(x) - 1.0) < 0.05, 0.0, x)
        return lambda t: (t[0].clip(-1.0, 1.0) ** 2).sum(), [x]

    def reshape_concat(seed):
        rng = Rng(seed)
        return (lambda t: (concat([t[0], t[1]], axis=1).reshape(-1) ** 2).sum(),
                [_randn(rng, 2, 3), _randn(rng, 2, 2)])

    def conv(stride, padding, shape=(2, 3, 8, 8), kshape=(4, 3, 3, 3)):
        def make(seed):
            rng = Rng(seed)
            x = _randn(rng, *shape)
            k = _randn(rng, *kshape) * 0.5
            b = _randn(rng, kshape[0])
            return (lambda t: ops.conv2d(t[0], t[1], t[2], stride, padding).sum(),
                    [x, k, b])
        return make

    def deconv(stride, padding):
        def make(seed):
            rng = Rng(seed)
            x = _randn(rng, 2, 3, 4, 4)
            k = _randn(rng, 3, 2, 3, 3) * 0.5
            b = _randn(rng, 2)
            return (lambda t: (ops.deconv2d(t[0], t[1], t[2], stride, padding)
                               ** 2).sum(),
                    [x, k, b])
        return make

    def upsample(seed):
        rng = Rng(seed)
        return (lambda t: (ops.upsample_nearest(t[0], 2) ** 2).sum(),
                [_randn(rng, 2, 2, 3, 3)])

    def downsample(seed):
        rng = Rng(seed)
        return (lambda t: (ops.downsample_avg(t[0], 2) ** 2).sum(),
                [_randn(rng, 2, 2, 4, 4)])

    def dense_(seed):
        rng = Rng(seed)
        return (lambda t: (ops.dense(t[0], t[1], t[2]) ** 2).sum(),
                [_randn(rng, 4, 5), _randn(rng, 5, 3), _randn(rng, 3)])

    def bnorm(seed):
        rng = Rng(seed)
        x = _randn(rng, 4, 3, 2, 2)
        gamma = _randn(rng, 3) * 0.5 + 1.0
        beta = _randn(rng, 3)

        def build(t):
            rm = np.zeros(3)
            rv = np.ones(3)
            out = ops.batch_norm(t[0], t[1], t[2], rm, rv, epsilon=1e-5,
                                 training=True)
            return (out * out).sum()
        return build, [x, gamma, beta]

    def bnorm_dense(seed):
        rng = Rng(seed)
        x = _randn(rng, 6, 4)
        gamma = _randn(rng, 4) * 0.5 + 1.0
        beta = _randn(rng, 4)

        def build(t):
            rm = np.zeros(4)
            rv = np.ones(4)
            out = ops.batch_norm(t[0], t[1], t[2], rm, rv, training=True)
            return (out ** 2).sum()
        return build, [x, gamma, beta]

    def fanout(seed):
        # one tensor consumed by several ops: checks gradient accumulation
        rng = Rng(seed)
        x = _randn(rng, 3, 3)
        return (lambda t: ((t[0] * t[0]).sum() + t[0].tanh().sum()
                           + (t[0] * 2.0).sum()), [x])

    cases = {}
    for op in ("add", "sub", "mul", "div", "neg"):
        cases[op] = elementwise(op)
    cases["broadcast"] = broadcast_add
    cases["pow"] = pow_
    cases["matmul"] = matmul
    cases["sum_axis"] = sum_axis
    cases["mean_axis"] = mean_axis
    for name in ("log", "exp", "sqrt", "tanh", "sigmoid", "leaky_relu"):
        cases[name] = unary(name)
    cases["clip"] = clip_
    cases["reshape_concat"] = reshape_concat
    cases["conv2d_s1"] = conv(1, 0)
    cases["conv2d_s1_pad"] = conv(1, 1)
    cases["conv2d_s2_pad"] = conv(2, 1)
    cases["conv2d_s2_k4"] = conv(2, 1, shape=(2, 2, 8, 8), kshape=(3, 2, 4, 4))
    cases["deconv2d_s1"] = deconv(1, 0)
    cases["deconv2d_s2_pad"] = deconv(2, 1)
    cases["upsample_nearest"] = upsample
    cases["downsample_avg"] = downsample
    cases["dense"] = dense_
    cases["batch_norm"] = bnorm
    cases["batch_norm_dense"] = bnorm_dense
    cases["fanout"] = fanout
    return cases


def run_op_checks(seeds=(0, 1, 2, 3, 4), tol: float = FD_TOL):
    """Run every registered case over the given seeds."""
    results = []
    for name, make in _case_registry().items():
        worst = 0.0
        for seed in seeds:
            build, arrays = make(1000 * seed + hash(name) % 997)
            worst = max(worst, check_case(build, arrays))
        results.append(CheckResult(name, worst, tol))
    return results


def run_adjoint_checks(n_configs: int = 100, tol: float = 1e-4,
                       seed: int = 0):
    """Inner-product adjoint identity <conv(x,K), y> == <x, deconv(y,K)>.

    Random geometries (stride, padding, kernel and image sizes, channels);
    computed in float64 so the tolerance reflects the algorithm, not the
    accumulation order.
    """
    rng = Rng(seed)
    worst = 0.0
    zero = Tensor(np.zeros(1, dtype=np.float64))
    for i in range(n_configs):
        sub = rng.spawn(i)
        k = int(sub.integers(1, 5, 1)[0])
        stride = int(sub.integers(1, 4, 1)[0])
        pad = int(sub.integers(0, k, 1)[0])
        n = int(sub.integers(1, 3, 1)[0])
        ci = int(sub.integers(1, 4, 1)[0])
        co = int(sub.integers(1, 4, 1)[0])
        h = int(sub.integers(k, k + 7, 1)[0]) + 2  # keeps h + 2p >= k roomy
        x = Tensor(sub.normal((n, ci, h, h), dtype=np.float64))
        kern = Tensor(sub.normal((co, ci, k, k), dtype=np.float64))
        b0 = Tensor(np.zeros(co, dtype=np.float64))
        bi = Tensor(np.zeros(ci, dtype=np.float64))
        cx = ops.conv2d(x, kern, b0, stride, pad)
        y = Tensor(sub.normal(cx.shape, dtype=np.float64))
        # deconv kernel layout is (C_in=co, C_out=ci, K, K): same array
        dy = ops.deconv2d(y, kern, bi, stride, pad)
        lhs = float((cx.data * y.data).sum())
        rhs = float((x.data * dy.data).sum())
        denom = max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, abs(lhs - rhs) / denom)
    del zero
    return CheckResult("conv_deconv_adjoint", worst, tol)


def run_all(seeds=(0, 1, 2, 3, 4)):
    """Full suite: per-op finite differences plus the adjoint identity."""
    results = run_op_checks(seeds=seeds)
    results.append(run_adjoint_checks())
    return results
