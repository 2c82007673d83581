"""Dual-residual image restoration networks on a small tape-based autodiff
core, plus a symbolic analyzer for residual connection styles."""

from .blocks import BlockState, DuRBConfig, durb_forward, make_durb, se_gate
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import add_gaussian_noise, load_image, load_manifest, sample_patches, save_image
from .layers import ConvSpec, NormParams, conv2d, pixel_shuffle, receptive_field
from .metrics import SsimConfig, psnr, restoration_loss, ssim
from .networks import (build_network, build_style_variant, count_parameters,
                       dump_activation_maps, make_spec, net_forward)
from .optim import AdamConfig, AdamState, adam_step
from .tensor import Tensor, backward, begin_tape, grad_check, no_grad
from .training import TrainConfig, evaluate, train
from .unravel import expand, pairing_report, verify_pairing

__version__ = "0.1.0"

__all__ = [
    "AdamConfig", "AdamState", "BlockState", "Checkpoint", "ConvSpec", "DuRBConfig",
    "NormParams", "SsimConfig", "Tensor", "TrainConfig", "adam_step",
    "add_gaussian_noise", "backward", "begin_tape", "build_network",
    "build_style_variant", "conv2d", "count_parameters", "durb_forward",
    "dump_activation_maps", "evaluate", "expand", "grad_check", "load_checkpoint",
    "load_image", "load_manifest", "make_durb", "make_spec", "net_forward", "no_grad",
    "pairing_report", "pixel_shuffle", "psnr", "receptive_field", "restoration_loss",
    "sample_patches", "save_checkpoint", "save_image", "se_gate", "ssim", "train",
    "verify_pairing",
]
