"""Image quality metrics (PSNR, windowed SSIM) and the training losses.

PSNR operates on plain arrays in [0, 1]. SSIM is built from taped tensor
ops so it can serve as a loss term; it uses the conventional 11x11
Gaussian window (sigma 1.5) and stabilizers C1 = (0.01 L)^2,
C2 = (0.03 L)^2 with dynamic range L = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .layers import ConvSpec, conv2d
from .tensor import Tensor


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def gaussian_window(size: int, sigma: float, dtype=np.float64) -> np.ndarray:
    """Normalized 2-D Gaussian kernel (positive, sums to 1)."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    k = np.outer(g, g)
    return (k / k.sum()).astype(dtype)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images; inf when equal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shapes differ, {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _window_mean(x: Tensor, kernel: np.ndarray) -> Tensor:
    # depthwise valid-window filtering: fold channels into the batch axis
    n, c, h, w = x.shape
    k = kernel.shape[0]
    flat = T.reshape(x, (n * c, 1, h, w))
    spec = ConvSpec(1, 1, k, bias=False)
    weight = Tensor(kernel.reshape(1, 1, k, k).astype(x.dtype))
    filtered = conv2d(flat, spec, weight, pad=0)
    return T.reshape(filtered, (n, c, h - k + 1, w - k + 1))


def ssim(a: Tensor | np.ndarray, b: Tensor | np.ndarray,
         cfg: SsimConfig = SsimConfig()) -> Tensor:
    """Mean structural similarity over all valid windows, differentiable.

    Multi-channel inputs are averaged per channel (windows are depthwise).
    """
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes differ, {a.shape} vs {b.shape}")
    if a.data.ndim != 4:
        raise DimensionError(f"ssim: expected (N, C, H, W), got {a.shape}")
    if a.shape[2] < cfg.window or a.shape[3] < cfg.window:
        raise ConfigError(
            f"ssim: image {a.shape[2]}x{a.shape[3]} smaller than {cfg.window}-tap window")
    kernel = gaussian_window(cfg.window, cfg.sigma, dtype=a.dtype)

    mu_a = _window_mean(a, kernel)
    mu_b = _window_mean(b, kernel)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = _window_mean(a * a, kernel) - mu_aa
    var_b = _window_mean(b * b, kernel) - mu_bb
    cov = _window_mean(a * b, kernel) - mu_ab

    lum = (2.0 * mu_ab + cfg.c1) / (mu_aa + mu_bb + cfg.c1)
    cs = (2.0 * cov + cfg.c2) / (var_a + var_b + cfg.c2)
    return (lum * cs).mean()


LOSS_PHASES = ("main", "l1_only", "l2_only")


def restoration_loss(out: Tensor, gt: Tensor | np.ndarray, phase: str = "main",
                     cfg: SsimConfig = SsimConfig()) -> Tensor:
    """Training loss.

    main     1.1 * (1 - SSIM) + 0.75 * mean|out - gt|
    l1_only  mean|out - gt|
    l2_only  mean (out - gt)^2
    """
    gt = gt if isinstance(gt, Tensor) else Tensor(gt)
    if out.shape != gt.shape:
        raise DimensionError(f"loss: shapes differ, {out.shape} vs {gt.shape}")
    if phase == "l1_only":
        return (out - gt).abs().mean()
    if phase == "l2_only":
        return (out - gt).square().mean()
    if phase == "main":
        similarity = ssim(out, gt, cfg)
        return (1.0 - similarity) * 1.1 + (out - gt).abs().mean() * 0.75
    raise ConfigError(f"unknown loss phase {phase!r}")
