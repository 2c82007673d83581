"""Finite-difference verification suite covering every differentiable kernel.

Each check compares the analytic gradient against 64-bit central
differences on a small fixture. Layer kernels must stay below 1e-5
relative error, loss terms below 1e-4.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import blocks as B
from . import layers as L
from . import metrics as M
from . import tensor as T
from .tensor import Tensor

LAYER_TOL = 1e-5
LOSS_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _rand(shape, seed, lo=-1.0, hi=1.0):
    return Tensor(np.random.default_rng(seed).uniform(lo, hi, size=shape))


def _proj(shape, seed):
    return Tensor(np.random.default_rng(seed).normal(size=shape))


def _check_elementwise(kind):
    other = _rand((3, 4), 50, lo=0.5, hi=2.0)

    def fn(t):
        return T.elementwise(kind, t, other).square().sum()

    return fn, _rand((3, 4), 51)


def _check_scalar_map(kind):
    lo = 0.3 if kind == "sqrt" else -1.0
    return (lambda t: T.scalar_map(kind, t).sum()), _rand((3, 4), 52, lo=lo)


def _check_conv(stride, dilation):
    spec = L.ConvSpec(2, 3, kernel=3, dilation=dilation, stride=stride)
    w = _rand(spec.weight_shape(), 53)
    b = _rand((3,), 54)
    return (lambda t: L.conv2d(t, spec, w, b).square().sum()), _rand((1, 2, 6, 6), 55)


def _check_conv_weight():
    spec = L.ConvSpec(2, 2, kernel=3, dilation=2)
    x = _rand((1, 2, 6, 6), 56)
    b = _rand((2,), 57)
    return (lambda t: L.conv2d(x, spec, t, b).square().sum()), _rand(spec.weight_shape(), 58)


def _check_pixel_shuffle():
    return (lambda t: L.pixel_shuffle(t, 2).square().sum()), _rand((1, 8, 3, 3), 59)


def _check_dense():
    w = _rand((5, 3), 60)
    b = _rand((3,), 61)
    return (lambda t: L.dense(t, w, b).square().sum()), _rand((2, 5), 62)


def _check_global_avg_pool():
    proj = _proj((2, 3, 1, 1), 63)
    return (lambda t: (L.global_avg_pool(t) * proj).sum()), _rand((2, 3, 4, 4), 64)


def _check_batch_norm():
    params = L.NormParams.identity(2, dtype=np.float64)
    proj = _proj((2, 2, 4, 4), 65)
    return (lambda t: (L.batch_norm(t, params, "train") * proj).sum()), \
        _rand((2, 2, 4, 4), 66)


def _check_instance_norm():
    params = L.NormParams.identity(2, dtype=np.float64)
    proj = _proj((1, 2, 4, 4), 67)
    return (lambda t: (L.instance_norm(t, params) * proj).sum()), _rand((1, 2, 4, 4), 68)


def _check_se_gate():
    rng = np.random.default_rng(69)
    params = B.SEParams(
        w1=Tensor(rng.normal(0, 0.4, size=(8, 2))),
        b1=Tensor(np.zeros(2)),
        w2=Tensor(rng.normal(0, 0.4, size=(2, 8))),
        b2=Tensor(np.zeros(8)),
    )
    proj = _proj((1, 8, 3, 3), 70)
    return (lambda t: (B.se_gate(t, 4, params) * proj).sum()), _rand((1, 8, 3, 3), 71)


def _check_ssim():
    gt = _rand((1, 1, 16, 16), 72, lo=0.0, hi=1.0)
    return (lambda t: M.ssim(t, gt)), _rand((1, 1, 16, 16), 73, lo=0.0, hi=1.0)


def _check_loss_main():
    gt = _rand((1, 1, 16, 16), 74, lo=0.0, hi=1.0)
    return (lambda t: M.restoration_loss(t, gt, "main")), \
        _rand((1, 1, 16, 16), 75, lo=0.0, hi=1.0)


def _check_durb(variant):
    norm = {"P": "batch", "S": "batch", "U": "instance", "US": "instance"}[variant]
    table = {"P": "noise", "S": "noise", "U": "blur", "US": "haze"}[variant]
    cfg = B.make_durb(variant, 1, table, 4, norm=norm, se_reduction=2)
    rng_init = np.random.default_rng(76)

    def init(name, shape, fan_in):
        return rng_init.uniform(-np.sqrt(6.0 / fan_in), np.sqrt(6.0 / fan_in), size=shape)

    params = B.make_durb_params(cfg, init, dtype=np.float64)
    x_shape = (1, 4, 4, 4)
    r = Tensor(np.random.default_rng(77).uniform(-1, 1,
                                                 size=B.carrier_shape(cfg, x_shape)))
    proj = _proj(x_shape, 78)

    def fn(t):
        out = B.durb_forward(B.BlockState(x=t, r=r), cfg, params)
        return (out.x * proj).sum()

    return fn, _rand(x_shape, 79)


def suite() -> list[tuple[str, float, object, object]]:
    """(name, tolerance, forward_fn, input) for every check."""
    checks = []
    for kind in ("add", "sub", "mul", "div"):
        fn, x = _check_elementwise(kind)
        checks.append((f"elementwise.{kind}", LAYER_TOL, fn, x))
    for kind in ("relu", "tanh", "sigmoid", "neg", "square", "sqrt", "abs"):
        fn, x = _check_scalar_map(kind)
        checks.append((f"scalar_map.{kind}", LAYER_TOL, fn, x))
    checks.append(("reduce.mean", LAYER_TOL,
                   lambda t: t.mean(axes=(0, 2)).square().sum(), _rand((2, 3, 4), 80)))
    fn, x = _check_conv(1, 2)
    checks.append(("conv2d.stride1_dilated", LAYER_TOL, fn, x))
    fn, x = _check_conv(2, 1)
    checks.append(("conv2d.stride2", LAYER_TOL, fn, x))
    fn, x = _check_conv_weight()
    checks.append(("conv2d.weight", LAYER_TOL, fn, x))
    fn, x = _check_pixel_shuffle()
    checks.append(("pixel_shuffle", LAYER_TOL, fn, x))
    fn, x = _check_dense()
    checks.append(("dense", LAYER_TOL, fn, x))
    fn, x = _check_global_avg_pool()
    checks.append(("global_avg_pool", LAYER_TOL, fn, x))
    fn, x = _check_batch_norm()
    checks.append(("batch_norm.train", LAYER_TOL, fn, x))
    fn, x = _check_instance_norm()
    checks.append(("instance_norm", LAYER_TOL, fn, x))
    fn, x = _check_se_gate()
    checks.append(("se_gate", LAYER_TOL, fn, x))
    fn, x = _check_ssim()
    checks.append(("ssim", LOSS_TOL, fn, x))
    fn, x = _check_loss_main()
    checks.append(("loss.main", LOSS_TOL, fn, x))
    for variant in B.VARIANTS:
        fn, x = _check_durb(variant)
        checks.append((f"durb.{variant}", LAYER_TOL, fn, x))
    return checks


def run_gradient_suite(only: str | None = None, eps: float = 1e-5) -> list[CheckResult]:
    results = []
    for name, tol, fn, x in suite():
        if only and only not in name:
            continue
        start = time.perf_counter()
        error = T.grad_check(fn, x, eps=eps)
        results.append(CheckResult(name=name, error=error, tolerance=tol,
                                   seconds=time.perf_counter() - start))
    return results
