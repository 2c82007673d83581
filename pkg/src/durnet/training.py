"""Training loop: Adam with lr 1e-4, betas (0.9, 0.999), eps 1e-8 by
default, aligned random crops per step, optional on-the-fly Gaussian
noise synthesis, and an optional two-phase loss schedule.

Runs are deterministic per seed: batch sampling, crop offsets, noise and
weight initialization all derive from named seed streams, so the same
configuration reproduces a bit-identical loss history.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, checkpoint_from_network, save_checkpoint
from .data import DatasetManifest, image_size, load_pair
from .errors import ConfigError
from .metrics import LOSS_PHASES, psnr, restoration_loss, ssim
from .networks import Network, clamp01, net_forward
from .optim import AdamConfig, AdamState, adam_step

# named seed streams, fixed so histories stay stable across versions
_STREAM_SAMPLING = 1000003
_STREAM_NOISE = 6700417
_STREAM_EVAL_NOISE = 999331


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 1
    crop: int = 48
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "main"
    phases: tuple[tuple[str, int], ...] | None = None
    sigma: float | None = None
    checkpoint_interval: int | None = None
    checkpoint_dir: Path | None = None

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.crop < 1:
            raise ConfigError("steps must be >= 0, batch and crop positive")
        if self.loss not in LOSS_PHASES:
            raise ConfigError(f"unknown loss phase {self.loss!r}")
        if self.phases is not None:
            for phase, count in self.phases:
                if phase not in LOSS_PHASES:
                    raise ConfigError(f"unknown loss phase {phase!r}")
                if count < 0:
                    raise ConfigError("phase step counts must be nonnegative")
        if self.checkpoint_interval is not None and self.checkpoint_interval < 1:
            raise ConfigError("checkpoint interval must be positive")

    def schedule(self) -> list[str]:
        if self.phases is None:
            return [self.loss] * self.steps
        out: list[str] = []
        for phase, count in self.phases:
            out.extend([phase] * count)
        return out


def _validate(net: Network, manifest: DatasetManifest, cfg: TrainConfig) -> None:
    if len(manifest) == 0:
        raise ConfigError("manifest is empty")
    if net.spec.encoder_decoder and cfg.crop % 4:
        raise ConfigError(f"crop {cfg.crop} not divisible by 4 "
                          f"(required by {net.spec.arch})")
    for rec in manifest.records:
        h, w, c = image_size(rec.degraded)
        if cfg.crop > h or cfg.crop > w:
            raise ConfigError(f"crop {cfg.crop} exceeds {h}x{w} image "
                              f"(manifest line {rec.line})")
        if c != net.spec.in_channels:
            raise ConfigError(f"{c}-channel image at manifest line {rec.line}, "
                              f"network expects {net.spec.in_channels}")


def train(net: Network, manifest: DatasetManifest,
          cfg: TrainConfig) -> tuple[list[tuple[int, float]], Checkpoint]:
    """Run the schedule; returns per-step (step, loss) history and the final
    checkpoint. Writes interval checkpoints when a directory is configured."""
    _validate(net, manifest, cfg)
    schedule = cfg.schedule()
    adam_cfg = AdamConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    state = AdamState()
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    history: list[tuple[int, float]] = []

    def pair_for(idx: int):
        if idx not in cache:
            cache[idx] = load_pair(manifest.records[idx])
        return cache[idx]

    for step, phase in enumerate(schedule):
        rng = np.random.default_rng([cfg.seed, _STREAM_SAMPLING, step])
        noise_rng = np.random.default_rng([cfg.seed, _STREAM_NOISE, step])
        xs, ys = [], []
        for _ in range(cfg.batch_size):
            idx = int(rng.integers(0, len(manifest)))
            degraded, clean = pair_for(idx)
            h, w = degraded.shape[-2:]
            oy = int(rng.integers(0, h - cfg.crop + 1))
            ox = int(rng.integers(0, w - cfg.crop + 1))
            d = degraded[..., oy:oy + cfg.crop, ox:ox + cfg.crop]
            c = clean[..., oy:oy + cfg.crop, ox:ox + cfg.crop]
            if cfg.sigma:
                d = d + noise_rng.normal(0.0, cfg.sigma / 255.0,
                                         size=d.shape).astype(d.dtype)
            xs.append(d)
            ys.append(c)
        x = np.stack(xs)
        y = np.stack(ys)

        T.begin_tape()
        out = net_forward(net, x, mode="train")
        loss = restoration_loss(out, y, phase)
        grads = T.backward(loss)
        named = {name: grads[t].data for name, t in net.store.items() if t in grads}
        adam_step(net.store, named, state, adam_cfg)
        history.append((step, loss.item()))

        if (cfg.checkpoint_dir is not None and cfg.checkpoint_interval
                and (step + 1) % cfg.checkpoint_interval == 0):
            ck = checkpoint_from_network(net, step=step + 1, seed=cfg.seed, adam=state)
            save_checkpoint(ck, Path(cfg.checkpoint_dir) / f"checkpoint_{step + 1:06d}.durn")

    final = checkpoint_from_network(net, step=len(schedule), seed=cfg.seed, adam=state)
    if cfg.checkpoint_dir is not None:
        save_checkpoint(final, Path(cfg.checkpoint_dir) / "checkpoint.durn")
    return history, final


def write_history_csv(history: list[tuple[int, float]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, value in history:
            fh.write(f"{step},{value:.8g}\n")


def evaluate(net: Network, manifest: DatasetManifest, sigma: float | None = None,
             seed: int = 0, limit: int | None = None,
             mode: str = "eval") -> list[dict]:
    """Per-pair restored PSNR/SSIM (and the degraded input's, for reference)."""
    results = []
    records = manifest.records[:limit] if limit else manifest.records
    for idx, rec in enumerate(records):
        degraded, clean = load_pair(rec)
        if sigma:
            rng = np.random.default_rng([seed, _STREAM_EVAL_NOISE, idx])
            degraded = degraded + rng.normal(0.0, sigma / 255.0,
                                             size=degraded.shape).astype(degraded.dtype)
        with T.no_grad():
            out = net_forward(net, degraded[None], mode=mode)
        restored = clamp01(out)[0]
        noisy = clamp01(degraded)
        results.append({
            "name": rec.degraded.name,
            "psnr": psnr(restored, clean),
            "ssim": ssim(restored[None], clean[None]).item(),
            "input_psnr": psnr(noisy, clean),
        })
    return results
