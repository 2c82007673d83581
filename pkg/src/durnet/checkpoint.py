"""Versioned binary checkpoints.

Layout:

    bytes 0..3    magic "DURN"
    bytes 4..7    format version, little-endian u32
    bytes 8..11   header length in bytes, little-endian u32
    header        UTF-8 JSON: network config text, training step, RNG seed,
                  optimizer step count, and one {name, shape, kind, offset}
                  entry per array
    payload       raw little-endian float32 arrays at the stated offsets

Arrays round-trip bit-exactly. Truncated or mislabeled files are rejected
without returning partial state.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .networks import Network, init_params, spec_from_config, spec_to_config
from .optim import AdamState

MAGIC = b"DURN"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: str  # network spec as key = value text
    params: dict[str, np.ndarray]
    norm_stats: dict[str, tuple[np.ndarray, np.ndarray, int]]  # mean, var, batches seen
    step: int = 0
    seed: int = 0
    adam: AdamState | None = None
    version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)


def checkpoint_from_network(net: Network, step: int = 0, seed: int = 0,
                            adam: AdamState | None = None) -> Checkpoint:
    params = {name: t.data.astype(np.float32, copy=True) for name, t in net.store.items()}
    norm_stats = {}
    for name, norm in net.store.norms.items():
        if norm.running_mean is not None:
            norm_stats[name] = (norm.running_mean.copy(), norm.running_var.copy(),
                                norm.batches_seen)
    return Checkpoint(config=spec_to_config(net.spec), params=params,
                      norm_stats=norm_stats, step=step, seed=seed, adam=adam)


def apply_to_network(ck: Checkpoint, net: Network) -> Network:
    """Load arrays into an existing network; key sets must match exactly."""
    have = set(name for name, _ in net.store.items())
    want = set(ck.params)
    if have != want:
        missing = sorted(have - want)
        unknown = sorted(want - have)
        raise FormatError(
            f"checkpoint/network parameter mismatch: missing {missing or 'none'}, "
            f"unknown {unknown or 'none'}")
    for name, t in net.store.items():
        arr = ck.params[name]
        if tuple(arr.shape) != t.data.shape:
            raise FormatError(f"parameter {name!r}: checkpoint shape {arr.shape} "
                              f"!= network shape {t.data.shape}")
        t.data = arr.astype(t.data.dtype, copy=True)
    for name, (rm, rv, seen) in ck.norm_stats.items():
        if name not in net.store.norms:
            raise FormatError(f"checkpoint norm stats for unknown norm {name!r}")
        norm = net.store.norms[name]
        norm.running_mean = rm.copy()
        norm.running_var = rv.copy()
        norm.batches_seen = seen
    return net


def network_from_checkpoint(ck: Checkpoint) -> Network:
    spec = spec_from_config(ck.config)
    store, blocks = init_params(spec, seed=ck.seed)
    return apply_to_network(ck, Network(spec=spec, store=store, blocks=blocks))


def _array_entries(ck: Checkpoint):
    """(kind, name, array) triples in a fixed serialization order."""
    for name, arr in ck.params.items():
        yield "param", name, arr
    for name, (rm, rv, _) in ck.norm_stats.items():
        yield "norm_mean", name, rm
        yield "norm_var", name, rv
    if ck.adam is not None:
        for name, arr in ck.adam.m.items():
            yield "adam_m", name, arr
        for name, arr in ck.adam.v.items():
            yield "adam_v", name, arr


def save_checkpoint(ck: Checkpoint, path) -> None:
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for kind, name, arr in _array_entries(ck):
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"kind": kind, "name": name,
                        "shape": list(np.asarray(arr).shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "config": ck.config,
        "step": ck.step,
        "seed": ck.seed,
        "adam_t": ck.adam.t if ck.adam is not None else None,
        "norm_batches": {name: seen for name, (_, _, seen) in ck.norm_stats.items()},
        "payload_bytes": offset,
        "arrays": entries,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", ck.version))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"checkpoint too short ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version} "
                          f"(bytes {raw[4:8]!r}), expected {FORMAT_VERSION}")
    (header_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + header_len:
        raise FormatError("truncated checkpoint: header extends past end of file")
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from exc
    payload = raw[12 + header_len:]
    expected = header.get("payload_bytes", 0)
    if len(payload) != expected:
        raise FormatError(f"truncated checkpoint: payload has {len(payload)} bytes, "
                          f"header promises {expected}")

    def read_array(entry) -> np.ndarray:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise FormatError(f"array {entry['name']!r} extends past payload end")
        return np.frombuffer(payload[start:end], dtype="<f4").reshape(shape).copy()

    params: dict[str, np.ndarray] = {}
    norm_mean: dict[str, np.ndarray] = {}
    norm_var: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        arr = read_array(entry)
        kind = entry["kind"]
        if kind == "param":
            params[entry["name"]] = arr
        elif kind == "norm_mean":
            norm_mean[entry["name"]] = arr
        elif kind == "norm_var":
            norm_var[entry["name"]] = arr
        elif kind == "adam_m":
            adam_m[entry["name"]] = arr
        elif kind == "adam_v":
            adam_v[entry["name"]] = arr
        else:
            raise FormatError(f"unknown array kind {kind!r}")

    batches = header.get("norm_batches", {})
    norm_stats = {name: (norm_mean[name], norm_var[name], int(batches.get(name, 0)))
                  for name in norm_mean}
    adam = None
    if header.get("adam_t") is not None:
        adam = AdamState(m=adam_m, v=adam_v, t=int(header["adam_t"]))
    return Checkpoint(config=header["config"], params=params, norm_stats=norm_stats,
                      step=int(header["step"]), seed=int(header["seed"]),
                      adam=adam, version=version)
