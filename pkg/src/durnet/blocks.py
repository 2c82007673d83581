"""Dual residual blocks.

A block carries two streams: the main stream x and a second residual
carrier r threaded across blocks. One block computes

    h  = x + norm(c2(relu(norm(c1(x)))))     inner residual, two 3x3 convs
    u  = relu(T1(h))                         first container
    v  = u + r;  r' = v                      first residual junction
    y  = relu(T2(v) + x)                     second container + junction

and returns (y, r'). The containers T1/T2 are filled per variant:

    P   [conv, conv]
    U   [pixel-shuffle x2 + conv, stride-2 conv]
    S   [conv, channel gate + conv]
    US  [pixel-shuffle x2 + conv, channel gate + stride-2 conv]

Output y always has the shape of x; the carrier lives at the T1 output
shape (2x spatial for U/US).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .layers import (ConvSpec, NormParams, batch_norm, conv2d, dense, global_avg_pool,
                     instance_norm, pixel_shuffle)
from .tensor import Tensor

VARIANTS = ("P", "U", "S", "US")

# per-task (kernel, dilation) rows for the paired container convolutions
BLOCK_TABLES: dict[str, dict[str, list[tuple[int, int]]]] = {
    "noise": {
        "t1": [(5, 1), (7, 1), (7, 2), (11, 2), (11, 1), (11, 3)],
        "t2": [(3, 1), (5, 1), (5, 1), (7, 1), (5, 1), (7, 1)],
    },
    "blur": {
        "t1": [(3, 3), (7, 1), (3, 3), (7, 1), (3, 2), (5, 1)],
        "t2": [(3, 1)] * 6,
    },
    "haze": {
        "t1": [(5, 1), (5, 1), (7, 1), (7, 1)] + [(11, 1)] * 8,
        "t2": [(3, 1)] * 12,
    },
    "raindrop_s": {
        "t1": [(3, 12), (3, 8), (3, 6)],
        "t2": [(3, 1)] * 3,
    },
    "raindrop_p": {
        "t1": [(3, 2), (5, 1), (3, 3), (7, 1), (3, 4), (7, 1)],
        "t2": [(5, 1)] * 6,
    },
}


@dataclass
class DuRBConfig:
    variant: str
    t1_conv: ConvSpec
    t2_conv: ConvSpec
    channels: int
    norm: str = "batch"  # batch | instance | none
    se_reduction: int = 16
    upsample_factor: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown block variant {self.variant!r}")
        if self.norm not in ("batch", "instance", "none"):
            raise ConfigError(f"unknown norm {self.norm!r}")
        up = self.variant in ("U", "US")
        if up:
            if self.t2_conv.stride != 2 or self.upsample_factor != 2:
                raise ConfigError(
                    f"variant {self.variant} needs t2 stride 2 and upsample factor 2")
            if self.channels % (self.upsample_factor ** 2):
                raise ConfigError(
                    f"{self.channels} channels not divisible by {self.upsample_factor ** 2}")
        else:
            if self.t1_conv.stride != 1 or self.t2_conv.stride != 1:
                raise ConfigError(f"variant {self.variant} needs stride-1 containers")
        if self.variant in ("S", "US") and self.channels % self.se_reduction:
            raise ConfigError(
                f"{self.channels} channels not divisible by reduction {self.se_reduction}")


@dataclass
class BlockState:
    x: Tensor
    r: Tensor


@dataclass
class SEParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class DuRBParams:
    c1_w: Tensor
    c1_b: Tensor
    c2_w: Tensor
    c2_b: Tensor
    t1_w: Tensor
    t1_b: Tensor
    t2_w: Tensor
    t2_b: Tensor
    norm1: NormParams | None = None
    norm2: NormParams | None = None
    se: SEParams | None = None

    def named_params(self) -> Iterator[tuple[str, Tensor]]:
        yield "c1.weight", self.c1_w
        yield "c1.bias", self.c1_b
        yield "c2.weight", self.c2_w
        yield "c2.bias", self.c2_b
        for label, norm in (("norm1", self.norm1), ("norm2", self.norm2)):
            if norm is not None:
                yield f"{label}.scale", norm.scale
                yield f"{label}.shift", norm.shift
        yield "t1.weight", self.t1_w
        yield "t1.bias", self.t1_b
        if self.se is not None:
            yield "se.w1", self.se.w1
            yield "se.b1", self.se.b1
            yield "se.w2", self.se.w2
            yield "se.b2", self.se.b2
        yield "t2.weight", self.t2_w
        yield "t2.bias", self.t2_b

    def named_norms(self) -> Iterator[tuple[str, NormParams]]:
        for label, norm in (("norm1", self.norm1), ("norm2", self.norm2)):
            if norm is not None:
                yield label, norm


def make_durb(variant: str, l: int, table: str, channels: int,
              norm: str = "batch", se_reduction: int = 16) -> DuRBConfig:
    """Block config for 1-based block index l of a task table."""
    try:
        rows = BLOCK_TABLES[table]
    except KeyError:
        raise ConfigError(f"unknown block table {table!r}") from None
    if not 1 <= l <= len(rows["t1"]):
        raise ConfigError(f"block index {l} outside table {table!r} (1..{len(rows['t1'])})")
    t1_k, t1_d = rows["t1"][l - 1]
    t2_k, t2_d = rows["t2"][l - 1]
    up = variant in ("U", "US")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown block variant {variant!r}")
    t1_in = channels // 4 if up else channels
    t1 = ConvSpec(t1_in, channels, kernel=t1_k, dilation=t1_d, stride=1)
    t2 = ConvSpec(channels, channels, kernel=t2_k, dilation=t2_d, stride=2 if up else 1)
    return DuRBConfig(variant=variant, t1_conv=t1, t2_conv=t2, channels=channels,
                      norm=norm, se_reduction=se_reduction)


InitFn = Callable[[str, tuple[int, ...], int], np.ndarray]


def make_durb_params(cfg: DuRBConfig, init: InitFn, dtype=np.float32) -> DuRBParams:
    """Allocate block parameters; `init(name, shape, fan_in)` supplies weights."""
    c = cfg.channels
    inner = ConvSpec(c, c, 3)

    def conv_pair(name, spec):
        w = init(f"{name}.weight", spec.weight_shape(), spec.in_channels * spec.kernel ** 2)
        return Tensor(w.astype(dtype), requires_grad=True), \
            Tensor(np.zeros(spec.out_channels, dtype=dtype), requires_grad=True)

    c1_w, c1_b = conv_pair("c1", inner)
    c2_w, c2_b = conv_pair("c2", inner)
    t1_w, t1_b = conv_pair("t1", cfg.t1_conv)
    t2_w, t2_b = conv_pair("t2", cfg.t2_conv)

    norm1 = norm2 = None
    if cfg.norm != "none":
        track = cfg.norm == "batch"
        norm1 = NormParams.identity(c, track_running=track, dtype=dtype)
        norm2 = NormParams.identity(c, track_running=track, dtype=dtype)

    se = None
    if cfg.variant in ("S", "US"):
        hidden = c // cfg.se_reduction
        se = SEParams(
            w1=Tensor(init("se.w1", (c, hidden), c).astype(dtype), requires_grad=True),
            b1=Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
            w2=Tensor(init("se.w2", (hidden, c), hidden).astype(dtype), requires_grad=True),
            b2=Tensor(np.zeros(c, dtype=dtype), requires_grad=True),
        )
    return DuRBParams(c1_w, c1_b, c2_w, c2_b, t1_w, t1_b, t2_w, t2_b,
                      norm1=norm1, norm2=norm2, se=se)


def se_gate(x: Tensor, reduction: int, params: SEParams) -> Tensor:
    """Channel attention: x scaled per channel by a sigmoid gate in (0, 1)."""
    n, c = x.shape[0], x.shape[1]
    if c % reduction:
        raise ConfigError(f"se_gate: {c} channels not divisible by reduction {reduction}")
    pooled = T.reshape(global_avg_pool(x), (n, c))
    hidden = T.relu(dense(pooled, params.w1, params.b1))
    gate = T.sigmoid(dense(hidden, params.w2, params.b2))
    return x * T.reshape(gate, (n, c, 1, 1))


def _norm(x: Tensor, kind: str, params: NormParams | None, mode: str) -> Tensor:
    if kind == "none" or params is None:
        return x
    if kind == "batch":
        return batch_norm(x, params, mode)
    return instance_norm(x, params)


def _inner(x: Tensor, cfg: DuRBConfig, p: DuRBParams, mode: str) -> Tensor:
    spec = ConvSpec(cfg.channels, cfg.channels, 3)
    h = _norm(conv2d(x, spec, p.c1_w, p.c1_b), cfg.norm, p.norm1, mode)
    h = _norm(conv2d(T.relu(h), spec, p.c2_w, p.c2_b), cfg.norm, p.norm2, mode)
    return x + h


def _t1(h: Tensor, cfg: DuRBConfig, p: DuRBParams) -> Tensor:
    if cfg.variant in ("U", "US"):
        h = pixel_shuffle(h, cfg.upsample_factor)
    return conv2d(h, cfg.t1_conv, p.t1_w, p.t1_b)


def _t2(v: Tensor, cfg: DuRBConfig, p: DuRBParams) -> Tensor:
    if cfg.variant in ("S", "US"):
        v = se_gate(v, cfg.se_reduction, p.se)
    return conv2d(v, cfg.t2_conv, p.t2_w, p.t2_b)


def durb_forward(state: BlockState, cfg: DuRBConfig, params: DuRBParams,
                 mode: str = "train") -> BlockState:
    """One dual-residual block step; returns the new (x, r) state."""
    x, r = state.x, state.r
    if x.shape[1] != cfg.channels:
        raise DimensionError(f"block expects {cfg.channels} channels, got {x.shape[1]}")
    h = _inner(x, cfg, params, mode)
    u = T.relu(_t1(h, cfg, params))
    if u.shape != r.shape:
        raise DimensionError(f"carrier shape {r.shape} does not match T1 output {u.shape}")
    v = u + r
    y = T.relu(_t2(v, cfg, params) + x)
    return BlockState(x=y, r=v)


def carrier_shape(cfg: DuRBConfig, x_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape of the carrier stream for a main-stream shape (N, C, H, W)."""
    n, _, h, w = x_shape
    if cfg.variant in ("U", "US"):
        f = cfg.upsample_factor
        return (n, cfg.channels, h * f, w * f)
    return (n, cfg.channels, h, w)


def forward_style_b(x: Tensor, cfg: DuRBConfig, params: DuRBParams,
                    mode: str = "train") -> Tensor:
    """Single-residual pairing: y = relu(x + T2(T1(inner(x)))); no carrier."""
    h = _inner(x, cfg, params, mode)
    return T.relu(x + _t2(_t1(h, cfg, params), cfg, params))


def forward_style_c(x: Tensor, cfg: DuRBConfig, params: DuRBParams,
                    mode: str = "train") -> Tensor:
    """Two chained plain residuals; infeasible for U/US (T1 changes size)."""
    if cfg.variant in ("U", "US"):
        raise ConfigError(f"connection style c cannot host variant {cfg.variant}")
    h = _inner(x, cfg, params, mode)
    y1 = x + _t1(h, cfg, params)
    return y1 + _t2(y1, cfg, params)
