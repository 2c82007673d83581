"""Restoration network builders and forward passes.

Five architectures share the same skeleton: a stem, a stack of dual
residual blocks, and a head ending in Tanh.

    durn_p    6 P blocks, 32 channels, batch norm, global residual
    durn_s    durn_p topology with S blocks (channel attention)
    durn_u    4:1 encoder, 6 U blocks at 64 channels, pixel-shuffle decoder
    durn_us   same encoder/decoder, 12 US blocks
    durn_s_p  encoder/decoder, 3 S blocks (dilations 12, 8, 6) then 6 P
              blocks, global residual

Networks with a global residual add the input to the Tanh output (an
all-zero head is the identity); the others map Tanh output to [0, 1] via
(t + 1) / 2. Outputs are returned unclamped; clamp for metrics only.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import (BlockState, DuRBConfig, DuRBParams, carrier_shape,
                     durb_forward, forward_style_b, forward_style_c, make_durb,
                     make_durb_params)
from .errors import ConfigError, DimensionError
from .layers import ConvSpec, NormParams, batch_norm, conv2d, instance_norm, pixel_shuffle
from .tensor import Tensor

ARCHS = ("durn_p", "durn_u", "durn_us", "durn_s", "durn_s_p")

_ARCH_DEFAULTS = {
    # arch: (in_ch, base_ch, n_blocks, enc_dec, global_residual, block_norm)
    "durn_p": (1, 32, 6, False, True, "batch"),
    "durn_s": (3, 32, 6, False, True, "batch"),
    "durn_u": (3, 64, 6, True, False, "instance"),
    "durn_us": (3, 64, 12, True, False, "instance"),
    "durn_s_p": (3, 64, 9, True, True, "batch"),
}


class ParamStore:
    """Flat registry of named tensors with deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.norms: dict[str, NormParams] = {}

    def register(self, name: str, t: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigError(f"parameter {name!r} registered twice")
        self._params[name] = t
        return t

    def register_norm(self, name: str, norm: NormParams) -> NormParams:
        if name in self.norms:
            raise ConfigError(f"norm {name!r} registered twice")
        self.norms[name] = norm
        self.register(f"{name}.scale", norm.scale)
        self.register(f"{name}.shift", norm.shift)
        return norm

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)


def count_parameters(store: ParamStore) -> int:
    """Total element count over all registered (trainable) tensors."""
    return sum(t.data.size for _, t in store.items())


@dataclass
class NetworkSpec:
    arch: str
    in_channels: int
    base_channels: int
    n_blocks: int
    norms: bool
    connection_style: str
    carrier_init: str
    se_reduction: int
    global_residual: bool
    encoder_decoder: bool
    block_cfgs: list[DuRBConfig] = field(repr=False)
    stem: list[tuple] = field(repr=False)
    head: list[tuple] = field(repr=False)


@dataclass
class Network:
    spec: NetworkSpec
    store: ParamStore
    blocks: list[DuRBParams]


def _block_plan(arch: str, n_blocks: int) -> list[tuple[str, str, int]]:
    """(variant, table, row) per block."""
    if arch == "durn_s_p":
        n_s = min(n_blocks, 3)
        plan = [("S", "raindrop_s", l) for l in range(1, n_s + 1)]
        plan += [("P", "raindrop_p", l) for l in range(1, n_blocks - n_s + 1)]
        return plan
    variant = {"durn_p": "P", "durn_s": "S", "durn_u": "U", "durn_us": "US"}[arch]
    table = {"durn_p": "noise", "durn_s": "noise", "durn_u": "blur", "durn_us": "haze"}[arch]
    return [(variant, table, l) for l in range(1, n_blocks + 1)]


def make_spec(arch: str, in_channels: int | None = None, base_channels: int | None = None,
              n_blocks: int | None = None, norms: bool = True, connection_style: str = "d",
              carrier_init: str | None = None, se_reduction: int = 16) -> NetworkSpec:
    """Declarative network description; raises ConfigError on bad combinations."""
    if arch not in ARCHS:
        raise ConfigError(f"unknown arch {arch!r}")
    d_in, d_base, d_blocks, enc_dec, residual, block_norm = _ARCH_DEFAULTS[arch]
    in_channels = d_in if in_channels is None else in_channels
    base = d_base if base_channels is None else base_channels
    n_blocks = d_blocks if n_blocks is None else n_blocks
    if in_channels not in (1, 3):
        raise ConfigError(f"in_channels must be 1 or 3, got {in_channels}")
    if base < 1:
        raise ConfigError(f"bad channel count {base}")
    if connection_style not in ("b", "c", "d"):
        raise ConfigError(f"unknown connection style {connection_style!r}")
    if n_blocks < 1:
        raise ConfigError("need at least one block")

    plan = _block_plan(arch, n_blocks)
    if connection_style == "c" and any(v in ("U", "US") for v, _, _ in plan):
        raise ConfigError("connection style c is infeasible for U/US blocks")

    norm_kind = block_norm if norms else "none"
    block_cfgs = [make_durb(v, l, table, base, norm=norm_kind, se_reduction=se_reduction)
                  for v, table, l in plan]

    if carrier_init is None:
        carrier_init = "zeros" if any(v in ("U", "US") for v, _, _ in plan) else "stem"
    if carrier_init not in ("stem", "zeros"):
        raise ConfigError(f"unknown carrier init {carrier_init!r}")
    if carrier_init == "stem" and any(v in ("U", "US") for v, _, _ in plan):
        raise ConfigError("carrier init 'stem' is shape-incompatible with U/US blocks")

    stem_norm = "instance" if enc_dec else "batch"
    if enc_dec:
        if base % 16:
            raise ConfigError(f"encoder/decoder archs need channels divisible by 16, got {base}")
        stem = [("conv", "stem.conv1", ConvSpec(in_channels, base, 3, stride=2))]
        if norms:
            stem.append(("norm", "stem.norm1", stem_norm))
        stem.append(("relu",))
        stem.append(("conv", "stem.conv2", ConvSpec(base, base, 3, stride=2)))
        if norms:
            stem.append(("norm", "stem.norm2", stem_norm))
        stem.append(("relu",))
        head = [("pixel_shuffle", 2), ("pixel_shuffle", 2),
                ("conv", "head.conv", ConvSpec(base // 16, in_channels, 3)), ("tanh",)]
    else:
        stem = [("conv", "stem.conv", ConvSpec(in_channels, base, 3))]
        if norms:
            stem.append(("norm", "stem.norm", stem_norm))
        stem.append(("relu",))
        head = [("conv", "head.conv", ConvSpec(base, in_channels, 3)), ("tanh",)]

    return NetworkSpec(arch=arch, in_channels=in_channels, base_channels=base,
                       n_blocks=n_blocks, norms=norms, connection_style=connection_style,
                       carrier_init=carrier_init, se_reduction=se_reduction,
                       global_residual=residual, encoder_decoder=enc_dec,
                       block_cfgs=block_cfgs, stem=stem, head=head)


def _seeded_init(seed: int):
    """Kaiming-style uniform fan-in init with one named stream per parameter.

    Streams are keyed by (seed, sha256(name)) so adding parameters never
    perturbs existing ones.
    """

    def init(name: str, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
        rng = np.random.default_rng([seed, key])
        bound = math.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return init


def init_params(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> tuple[ParamStore, list[DuRBParams]]:
    store = ParamStore()
    init = _seeded_init(seed)

    def add_conv(name: str, cspec: ConvSpec):
        # the final head conv starts at zero so a fresh network is the
        # identity map (global residual) or a flat mid-gray; everything
        # else is Kaiming-style fan-in uniform
        if name.startswith("head."):
            w = np.zeros(cspec.weight_shape(), dtype=dtype)
        else:
            fan = cspec.in_channels * cspec.kernel ** 2
            w = init(f"{name}.weight", cspec.weight_shape(), fan).astype(dtype)
        store.register(f"{name}.weight", Tensor(w, requires_grad=True))
        store.register(f"{name}.bias",
                       Tensor(np.zeros(cspec.out_channels, dtype=dtype), requires_grad=True))

    def add_stage(descs):
        for desc in descs:
            if desc[0] == "conv":
                add_conv(desc[1], desc[2])
            elif desc[0] == "norm":
                _, name, kind = desc
                channels = _norm_channels(descs, name)
                store.register_norm(name, NormParams.identity(
                    channels, track_running=(kind == "batch"), dtype=dtype))

    add_stage(spec.stem)
    blocks = []
    for l, cfg in enumerate(spec.block_cfgs, start=1):
        prefix = f"block{l}"
        bp = make_durb_params(
            cfg, lambda n, s, f, p=prefix: init(f"{p}.{n}", s, f), dtype=dtype)
        for name, t in bp.named_params():
            store.register(f"{prefix}.{name}", t)
        for name, norm in bp.named_norms():
            store.norms[f"{prefix}.{name}"] = norm
        blocks.append(bp)
    add_stage(spec.head)
    return store, blocks


def _norm_channels(descs, norm_name: str) -> int:
    # a norm always follows a conv in stem/head descriptors
    out = None
    for desc in descs:
        if desc[0] == "conv":
            out = desc[2].out_channels
        elif desc[0] == "norm" and desc[1] == norm_name:
            if out is None:
                raise ConfigError(f"norm {norm_name!r} has no preceding conv")
            return out
    raise ConfigError(f"norm {norm_name!r} not found")


def build_network(arch: str, seed: int = 0, dtype=np.float32, **options) -> Network:
    """Build spec + freshly initialized parameters for an architecture."""
    spec = make_spec(arch, **options)
    store, blocks = init_params(spec, seed=seed, dtype=dtype)
    return Network(spec=spec, store=store, blocks=blocks)


def build_style_variant(style: str, base: NetworkSpec) -> NetworkSpec:
    """Same architecture and parameter layout, different connection style."""
    return make_spec(base.arch, in_channels=base.in_channels,
                     base_channels=base.base_channels, n_blocks=base.n_blocks,
                     norms=base.norms, connection_style=style,
                     carrier_init=base.carrier_init, se_reduction=base.se_reduction)


def _run_stage(x: Tensor, descs, store: ParamStore, mode: str) -> Tensor:
    for desc in descs:
        kind = desc[0]
        if kind == "conv":
            _, name, cspec = desc
            x = conv2d(x, cspec, store[f"{name}.weight"], store[f"{name}.bias"])
        elif kind == "norm":
            _, name, norm_kind = desc
            if norm_kind == "batch":
                x = batch_norm(x, store.norms[name], mode)
            else:
                x = instance_norm(x, store.norms[name])
        elif kind == "relu":
            x = T.relu(x)
        elif kind == "tanh":
            x = T.tanh(x)
        elif kind == "pixel_shuffle":
            x = pixel_shuffle(x, desc[1])
        else:
            raise ConfigError(f"unknown layer descriptor {desc!r}")
    return x


def net_forward(net: Network, batch, mode: str = "train",
                tap_sink: dict[int, Tensor] | None = None) -> Tensor:
    """Run the network on a (N, C, H, W) batch in [0, 1].

    Output has the input's shape and is not clamped. `tap_sink`, when
    given, receives the main-stream tensor entering block 1 (key 0) and
    leaving block l (key l).
    """
    spec = net.spec
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    if x.data.ndim != 4 or x.shape[1] != spec.in_channels:
        raise DimensionError(
            f"expected (N, {spec.in_channels}, H, W) input, got {x.shape}")
    if spec.encoder_decoder and (x.shape[2] % 4 or x.shape[3] % 4):
        raise DimensionError(
            f"encoder/decoder archs need spatial size divisible by 4, got {x.shape[2:]}")
    inp = x
    x = _run_stage(x, spec.stem, net.store, mode)

    if tap_sink is not None:
        tap_sink[0] = x
    style = spec.connection_style
    if style == "d":
        if spec.carrier_init == "stem":
            r = x
        else:
            r = T.zeros(carrier_shape(spec.block_cfgs[0], x.shape), dtype=x.dtype)
        state = BlockState(x=x, r=r)
        for l, (cfg, bp) in enumerate(zip(spec.block_cfgs, net.blocks), start=1):
            state = durb_forward(state, cfg, bp, mode)
            if tap_sink is not None:
                tap_sink[l] = state.x
        x = state.x
    else:
        step = forward_style_b if style == "b" else forward_style_c
        for l, (cfg, bp) in enumerate(zip(spec.block_cfgs, net.blocks), start=1):
            x = step(x, cfg, bp, mode)
            if tap_sink is not None:
                tap_sink[l] = x
    x = _run_stage(x, spec.head, net.store, mode)
    if spec.global_residual:
        return x + inp
    return (x + 1.0) * 0.5


def clamp01(x: Tensor | np.ndarray) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else x
    return np.clip(data, 0.0, 1.0)


def dump_activation_maps(net: Network, batch, taps: list[int],
                         mode: str = "train") -> list[np.ndarray]:
    """Per tap, the over-channel sum of the main stream, min-max mapped to [0, 1].

    Tap 0 is the input to the first block; tap l the output of block l.
    Batch-norm running statistics are restored afterwards, so dumping has
    no training side effects.
    """
    for t in taps:
        if not 0 <= t <= len(net.spec.block_cfgs):
            raise ConfigError(f"tap {t} outside 0..{len(net.spec.block_cfgs)}")
    saved = {name: (norm.running_mean.copy() if norm.running_mean is not None else None,
                    norm.running_var.copy() if norm.running_var is not None else None,
                    norm.batches_seen)
             for name, norm in net.store.norms.items()}
    sink: dict[int, Tensor] = {}
    with T.no_grad():
        net_forward(net, batch, mode=mode, tap_sink=sink)
    for name, (rm, rv, seen) in saved.items():
        norm = net.store.norms[name]
        norm.running_mean, norm.running_var, norm.batches_seen = rm, rv, seen
    maps = []
    for t in taps:
        plane = sink[t].data[0].sum(axis=0)
        lo, hi = plane.min(), plane.max()
        maps.append((plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane))
    return maps


# -- key = value config round-trip ----------------------------------------

_CONFIG_KEYS = ("arch", "in_channels", "base_channels", "n_blocks", "norms",
                "connection_style", "carrier_init", "se_reduction")


def spec_to_config(spec: NetworkSpec) -> str:
    lines = [f"arch = {spec.arch}",
             f"in_channels = {spec.in_channels}",
             f"base_channels = {spec.base_channels}",
             f"n_blocks = {spec.n_blocks}",
             f"norms = {'true' if spec.norms else 'false'}",
             f"connection_style = {spec.connection_style}",
             f"carrier_init = {spec.carrier_init}",
             f"se_reduction = {spec.se_reduction}"]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict:
    """Parse `key = value` lines; '#' starts a comment."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in ("in_channels", "base_channels", "n_blocks", "se_reduction"):
            values[key] = int(value)
        elif key == "norms":
            if value not in ("true", "false"):
                raise ConfigError(f"config line {lineno}: norms must be true/false")
            values[key] = value == "true"
        else:
            values[key] = value
    return values


def spec_from_config(text: str) -> NetworkSpec:
    values = parse_config(text)
    arch = values.pop("arch", None)
    if arch is None:
        raise ConfigError("config is missing 'arch'")
    return make_spec(str(arch), **values)
