"""Layer kernels: dilated/strided convolution, pixel shuffle, pooling,
dense layers and the two normalizations.

Images are NCHW. Stride-1 convolutions preserve spatial size via zero
padding of dilation*(kernel-1)/2 per side; stride-2 uses the same padding
and yields ceil(H/2) x ceil(W/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    dilation: int = 1
    stride: int = 1
    bias: bool = True

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd and positive, got {self.kernel}")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be positive, got {self.dilation}")
        if self.stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")

    @property
    def receptive(self) -> int:
        return receptive_field(self.kernel, self.dilation)

    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)


def receptive_field(kernel: int, dilation: int) -> int:
    """Receptive field of a single convolution: dilation*(kernel-1) + 1."""
    return dilation * (kernel - 1) + 1


_COL_BUDGET = 8_000_000  # im2col elements per chunk; bounds peak memory


def _gather_indices(k, dilation, stride, row0, row1, out_w):
    """Patch gather indices for output rows [row0, row1)."""
    i0 = np.repeat(np.arange(k) * dilation, k)
    j0 = np.tile(np.arange(k) * dilation, k)
    i1 = stride * np.repeat(np.arange(row0, row1), out_w)
    j1 = stride * np.tile(np.arange(out_w), row1 - row0)
    return i0[:, None] + i1[None, :], j0[:, None] + j1[None, :]  # (k*k, P) each


def _row_chunks(out_h, out_w, c, k):
    rows = max(1, _COL_BUDGET // max(1, c * k * k * out_w))
    return [(r, min(r + rows, out_h)) for r in range(0, out_h, rows)]


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None,
           pad: int | None = None) -> Tensor:
    """2-D convolution with square kernel and zero padding.

    x (N, Cin, H, W), weight (Cout, Cin, k, k), bias (Cout,) or None.
    Default padding is "same" (dilation*(kernel-1)/2 per side); pass pad=0
    for valid-window filtering.
    """
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise DimensionError(f"conv2d: input has {c} channels, spec expects {spec.in_channels}")
    if weight.shape != spec.weight_shape():
        raise DimensionError(f"conv2d: weight shape {weight.shape} != {spec.weight_shape()}")
    if spec.bias and (bias is None or bias.shape != (spec.out_channels,)):
        raise DimensionError("conv2d: bias missing or mis-shaped")
    if not spec.bias:
        bias = None

    k, d, s = spec.kernel, spec.dilation, spec.stride
    if pad is None:
        pad = d * (k - 1) // 2
    out_h = (h + 2 * pad - d * (k - 1) - 1) // s + 1
    out_w = (w + 2 * pad - d * (k - 1) - 1) // s + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    chunks = _row_chunks(out_h, out_w, c, k)
    w2 = weight.data.reshape(spec.out_channels, c * k * k)
    out = np.empty((n, spec.out_channels, out_h, out_w), dtype=xp.dtype)
    for r0, r1 in chunks:
        rows, cols_idx = _gather_indices(k, d, s, r0, r1, out_w)
        cols = xp[:, :, rows, cols_idx].reshape(n, c * k * k, (r1 - r0) * out_w)
        out[:, :, r0:r1, :] = np.matmul(w2, cols).reshape(
            n, spec.out_channels, r1 - r0, out_w)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    padded_shape = xp.shape

    def backward(g):
        # patch gathers are recomputed per chunk instead of saving im2col
        grad_w = np.zeros((spec.out_channels, c * k * k), dtype=g.dtype)
        grad_b = g.sum(axis=(0, 2, 3)) if bias is not None else None
        dxp = np.zeros(padded_shape, dtype=g.dtype)
        for r0, r1 in chunks:
            rows, cols_idx = _gather_indices(k, d, s, r0, r1, out_w)
            cols = xp[:, :, rows, cols_idx].reshape(n, c * k * k, (r1 - r0) * out_w)
            g2 = g[:, :, r0:r1, :].reshape(n, spec.out_channels, (r1 - r0) * out_w)
            grad_w += np.einsum("nop,nfp->of", g2, cols)
            dcols = np.matmul(w2.T, g2).reshape(n, c, k * k, (r1 - r0) * out_w)
            np.add.at(dxp, (slice(None), slice(None), rows, cols_idx), dcols)
        grad_x = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
        grad_w = grad_w.reshape(weight.shape)
        return (grad_x, grad_w, grad_b) if bias is not None else (grad_x, grad_w)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return T.record("conv2d", out, parents, backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r^2, H, W) into (N, C, rH, rW).

    out[n, c, h*r+a, w*r+b] == x[n, c*r^2 + a*r + b, h, w].
    """
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise DimensionError(f"pixel_shuffle: {c} channels not divisible by {r * r}")
    co = c // (r * r)
    out = (x.data.reshape(n, co, r, r, h, w)
           .transpose(0, 1, 4, 2, 5, 3)
           .reshape(n, co, h * r, w * r))

    def backward(g):
        gx = (g.reshape(n, co, h, r, w, r)
              .transpose(0, 1, 3, 5, 2, 4)
              .reshape(n, c, h, w))
        return (gx,)

    return T.record("pixel_shuffle", np.ascontiguousarray(out), (x,), backward)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of pixel_shuffle: (N, C, rH, rW) -> (N, C*r^2, H, W)."""
    n, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise DimensionError(f"pixel_unshuffle: spatial {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    out = (x.data.reshape(n, c, h, r, w, r)
           .transpose(0, 1, 3, 5, 2, 4)
           .reshape(n, c * r * r, h, w))

    def backward(g):
        gx = (g.reshape(n, c, r, r, h, w)
              .transpose(0, 1, 4, 2, 5, 3)
              .reshape(n, c, hr, wr))
        return (gx,)

    return T.record("pixel_unshuffle", np.ascontiguousarray(out), (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over H, W per (n, c): (N, C, H, W) -> (N, C, 1, 1)."""
    return T.reduce("mean", x, axes=(2, 3))


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map (N, F) @ (F, G) + bias."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: cannot multiply {x.shape} by {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"dense: bias shape {bias.shape} != ({weight.shape[1]},)")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    xd, wd = x.data, weight.data

    def backward(g):
        grads = (g @ wd.T, xd.T @ g)
        return grads + (g.sum(axis=0),) if bias is not None else grads

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return T.record("dense", out, parents, backward)


@dataclass
class NormParams:
    """Per-channel affine + (batch mode only) running statistics."""

    scale: Tensor
    shift: Tensor
    eps: float = 1e-5
    momentum: float = 0.1
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    batches_seen: int = field(default=0)

    @classmethod
    def identity(cls, channels: int, track_running: bool = False, dtype=np.float32):
        rm = np.zeros(channels, dtype=np.float32) if track_running else None
        rv = np.ones(channels, dtype=np.float32) if track_running else None
        return cls(scale=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
                   shift=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
                   running_mean=rm, running_var=rv)


def _affine(xhat: Tensor, params: NormParams, channels: int) -> Tensor:
    scale = T.reshape(params.scale, (1, channels, 1, 1))
    shift = T.reshape(params.shift, (1, channels, 1, 1))
    return xhat * scale + shift


def batch_norm(x: Tensor, params: NormParams, mode: str = "train") -> Tensor:
    """Normalize per channel over (N, H, W); running stats updated in train mode."""
    c = x.shape[1]
    if params.scale.shape != (c,):
        raise DimensionError(f"batch_norm: {c} channels vs scale shape {params.scale.shape}")
    if mode == "train":
        mu = T.reduce("mean", x, axes=(0, 2, 3))
        xc = x - mu
        var = T.reduce("mean", T.square(xc), axes=(0, 2, 3))
        xhat = xc / T.sqrt(var + params.eps)
        if params.running_mean is not None:
            m = params.momentum
            params.running_mean = ((1 - m) * params.running_mean
                                   + m * mu.data.reshape(-1).astype(np.float32))
            params.running_var = ((1 - m) * params.running_var
                                  + m * var.data.reshape(-1).astype(np.float32))
            params.batches_seen += 1
        return _affine(xhat, params, c)
    if mode == "eval":
        if params.running_mean is None or params.batches_seen == 0:
            raise ConfigError("batch_norm: eval mode before any running statistics")
        rm = Tensor(params.running_mean.reshape(1, c, 1, 1).astype(x.dtype))
        rv = params.running_var.reshape(1, c, 1, 1).astype(x.dtype)
        denom = Tensor(np.sqrt(rv + params.eps))
        return _affine((x - rm) / denom, params, c)
    raise ConfigError(f"batch_norm: unknown mode {mode!r}")


def instance_norm(x: Tensor, params: NormParams) -> Tensor:
    """Normalize each (n, c) plane by its own spatial statistics."""
    c = x.shape[1]
    if params.scale.shape != (c,):
        raise DimensionError(f"instance_norm: {c} channels vs scale shape {params.scale.shape}")
    mu = T.reduce("mean", x, axes=(2, 3))
    xc = x - mu
    var = T.reduce("mean", T.square(xc), axes=(2, 3))
    xhat = xc / T.sqrt(var + params.eps)
    return _affine(xhat, params, c)
