import math

import numpy as np
import pytest

from durnet import metrics as M
from durnet import tensor as T
from durnet.errors import ConfigError, DimensionError
from durnet.tensor import Tensor


def image(shape=(1, 1, 16, 16), seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=shape)


def test_psnr_identical_is_inf():
    x = image()
    assert M.psnr(x, x) == math.inf


def test_psnr_uniform_difference():
    x = image(seed=1)
    assert M.psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionError):
        M.psnr(image(), image((1, 1, 8, 8)))


def test_psnr_matches_direct_mse():
    a, b = image(seed=2), image(seed=3)
    direct = 10 * math.log10(1.0 / np.mean((a - b) ** 2))
    assert M.psnr(a, b) == pytest.approx(direct, abs=1e-6)


def test_psnr_decreases_with_noise():
    x = image(seed=4)
    rng = np.random.default_rng(5)
    noise = rng.normal(size=x.shape)
    values = [M.psnr(x, x + amp * noise) for amp in (0.01, 0.05, 0.1, 0.2)]
    assert all(p > q for p, q in zip(values, values[1:]))


def test_gaussian_window_properties():
    k = M.gaussian_window(11, 1.5)
    assert k.shape == (11, 11)
    assert np.all(k > 0)
    assert k.sum() == pytest.approx(1.0, abs=1e-12)


def test_ssim_self_similarity():
    x = image(seed=6)
    assert M.ssim(x, x).item() == pytest.approx(1.0, abs=1e-6)


def test_ssim_constant_images_closed_form():
    p, q = 0.3, 0.7
    a = np.full((1, 1, 16, 16), p)
    b = np.full((1, 1, 16, 16), q)
    cfg = M.SsimConfig()
    expected = (2 * p * q + cfg.c1) / (p * p + q * q + cfg.c1)
    assert M.ssim(a, b, cfg).item() == pytest.approx(expected, abs=1e-9)


def test_ssim_symmetric():
    a, b = image(seed=7), image(seed=8)
    assert abs(M.ssim(a, b).item() - M.ssim(b, a).item()) < 1e-9


def test_ssim_multichannel_is_channel_mean():
    a, b = image((1, 3, 16, 16), seed=9), image((1, 3, 16, 16), seed=10)
    per_channel = [M.ssim(a[:, c:c + 1], b[:, c:c + 1]).item() for c in range(3)]
    assert M.ssim(a, b).item() == pytest.approx(np.mean(per_channel), abs=1e-9)


def test_ssim_window_too_large():
    with pytest.raises(ConfigError):
        M.ssim(image((1, 1, 8, 8)), image((1, 1, 8, 8)))


def test_ssim_gradcheck():
    gt = Tensor(image(seed=11))

    def fn(t):
        return M.ssim(t, gt)

    assert T.grad_check(fn, Tensor(image(seed=12))) < 1e-4


def test_loss_zero_at_perfect_reconstruction():
    x = Tensor(image(seed=13))
    assert M.restoration_loss(x, x, "main").item() == pytest.approx(0.0, abs=1e-6)
    assert M.restoration_loss(x, x, "l1_only").item() == 0.0
    assert M.restoration_loss(x, x, "l2_only").item() == 0.0


def test_loss_l2_uniform_difference():
    x = Tensor(image(seed=14))
    shifted = Tensor(x.data + 0.1)
    assert M.restoration_loss(shifted, x, "l2_only").item() == pytest.approx(0.01, rel=1e-5)


def test_loss_main_nonnegative():
    for seed in range(5):
        a = Tensor(image(seed=seed))
        b = Tensor(image(seed=seed + 100))
        assert M.restoration_loss(a, b, "main").item() >= 0.0


def test_loss_unknown_phase():
    x = Tensor(image())
    with pytest.raises(ConfigError):
        M.restoration_loss(x, x, "l3")


def test_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        M.restoration_loss(Tensor(image()), Tensor(image((1, 1, 8, 8))), "l1_only")


def test_loss_main_gradcheck():
    gt = Tensor(image(seed=15))

    def fn(t):
        return M.restoration_loss(t, gt, "main")

    assert T.grad_check(fn, Tensor(image(seed=16))) < 1e-4


def test_loss_gradient_reaches_input():
    gt = Tensor(image(seed=17))
    x = Tensor(image(seed=18), requires_grad=True)
    T.begin_tape()
    loss = M.restoration_loss(x, gt, "main")
    g = T.backward(loss)[x]
    assert g.shape == x.shape
    assert np.any(g.data != 0)
