import numpy as np
import pytest

from durnet import layers as L
from durnet import tensor as T
from durnet.errors import ConfigError, DimensionError
from durnet.tensor import Tensor


def randt(shape, seed=0, lo=-1.0, hi=1.0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(lo, hi, size=shape).astype(dtype))


# every (kernel, dilation) pair used by the shipped block tables
TABLE_PAIRS = [(5, 1), (3, 1), (7, 1), (7, 2), (11, 2), (11, 1), (11, 3),
               (3, 3), (3, 2), (3, 12), (3, 8), (3, 6), (3, 4)]


@pytest.mark.parametrize("kernel,dilation,expected", [
    (11, 3, 31),
    (7, 2, 13),
    (1, 1, 1),
    (1, 7, 1),
])
def test_receptive_field_values(kernel, dilation, expected):
    assert L.receptive_field(kernel, dilation) == expected


def test_conv_identity_kernel():
    x = randt((1, 1, 5, 5))
    spec = L.ConvSpec(1, 1, kernel=1, bias=False)
    out = L.conv2d(x, spec, Tensor(np.ones((1, 1, 1, 1))))
    assert np.array_equal(out.data, x.data)


def test_conv_ones_kernel_interior():
    v = 0.5
    x = Tensor(np.full((1, 1, 6, 6), v))
    spec = L.ConvSpec(1, 1, kernel=3, bias=False)
    out = L.conv2d(x, spec, Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 6, 6)
    assert np.allclose(out.data[0, 0, 1:-1, 1:-1], 9 * v)


def test_conv_channel_mismatch():
    spec = L.ConvSpec(3, 4, kernel=3)
    with pytest.raises(DimensionError):
        L.conv2d(randt((1, 2, 5, 5)), spec, randt(spec.weight_shape()), randt((4,)))


def test_conv_even_kernel_rejected():
    with pytest.raises(ConfigError):
        L.ConvSpec(1, 1, kernel=4)


@pytest.mark.parametrize("kernel,dilation", TABLE_PAIRS)
def test_conv_stride1_preserves_spatial_size(kernel, dilation):
    spec = L.ConvSpec(2, 3, kernel=kernel, dilation=dilation, bias=False)
    x = randt((1, 2, 26, 26), seed=kernel * 100 + dilation)
    out = L.conv2d(x, spec, randt(spec.weight_shape(), seed=1))
    assert out.shape == (1, 3, 26, 26)


@pytest.mark.parametrize("size", [6, 7])
def test_conv_stride2_halves_ceil(size):
    spec = L.ConvSpec(1, 1, kernel=3, stride=2, bias=False)
    out = L.conv2d(randt((1, 1, size, size)), spec, randt(spec.weight_shape(), seed=2))
    expected = (size + 1) // 2
    assert out.shape == (1, 1, expected, expected)


def test_conv_gradcheck_input():
    spec = L.ConvSpec(2, 3, kernel=3, dilation=1, bias=True)
    w = randt(spec.weight_shape(), seed=3)
    b = randt((3,), seed=4)

    def fn(t):
        return L.conv2d(t, spec, w, b).square().sum()

    assert T.grad_check(fn, randt((1, 2, 5, 5), seed=5)) < 1e-6


def test_conv_gradcheck_weight_and_bias():
    spec = L.ConvSpec(2, 2, kernel=3, dilation=2, stride=2)
    x = randt((2, 2, 6, 6), seed=6)
    b = randt((2,), seed=7)
    w = randt(spec.weight_shape(), seed=8)

    assert T.grad_check(lambda t: L.conv2d(x, spec, t, b).square().sum(), w) < 1e-6
    assert T.grad_check(lambda t: L.conv2d(x, spec, w, t).square().sum(), b) < 1e-6


def test_pixel_shuffle_shape():
    out = L.pixel_shuffle(randt((1, 4, 2, 2)), 2)
    assert out.shape == (1, 1, 4, 4)


def test_pixel_shuffle_roundtrip():
    x = randt((2, 8, 3, 5), seed=9)
    back = L.pixel_unshuffle(L.pixel_shuffle(x, 2), 2)
    assert np.array_equal(back.data, x.data)


def test_pixel_shuffle_tile_layout():
    # channels [c0, c1, c2, c3] constant per channel -> 2x2 tiles [[c0, c1], [c2, c3]]
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    x = Tensor(np.broadcast_to(vals.reshape(1, 4, 1, 1), (1, 4, 2, 2)).copy())
    out = L.pixel_shuffle(x, 2).data
    # brute-force index enumeration oracle
    expected = np.zeros((1, 1, 4, 4))
    for a in range(2):
        for b in range(2):
            for h in range(2):
                for w in range(2):
                    expected[0, 0, h * 2 + a, w * 2 + b] = x.data[0, a * 2 + b, h, w]
    assert np.array_equal(out, expected)
    assert np.array_equal(out[0, 0, :2, :2], [[1, 2], [3, 4]])


def test_pixel_shuffle_indivisible():
    with pytest.raises(DimensionError):
        L.pixel_shuffle(randt((1, 3, 2, 2)), 2)


def test_pixel_shuffle_gradcheck():
    def fn(t):
        return L.pixel_shuffle(t, 2).square().sum()

    assert T.grad_check(fn, randt((1, 8, 3, 3), seed=10)) < 1e-7


def test_global_avg_pool():
    c = Tensor(np.full((2, 3, 4, 4), 1.25))
    assert np.allclose(L.global_avg_pool(c).data, 1.25)
    plane = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 2, 2))
    assert L.global_avg_pool(plane).item() == pytest.approx(2.5)


def test_global_avg_pool_permutation_invariant():
    x = randt((1, 2, 4, 4), seed=11)
    perm = Tensor(x.data[:, :, ::-1, ::-1].copy())
    assert np.allclose(L.global_avg_pool(x).data, L.global_avg_pool(perm).data)


def test_dense_identity_and_zero():
    x = randt((3, 4), seed=12)
    eye = Tensor(np.eye(4))
    zero_b = Tensor(np.zeros(4))
    assert np.allclose(L.dense(x, eye, zero_b).data, x.data)
    b = randt((5,), seed=13)
    out = L.dense(x, Tensor(np.zeros((4, 5))), b)
    assert np.allclose(out.data, np.tile(b.data, (3, 1)))


def test_dense_gradcheck():
    w = randt((4, 3), seed=14)
    b = randt((3,), seed=15)
    x = randt((2, 4), seed=16)
    assert T.grad_check(lambda t: L.dense(t, w, b).square().sum(), x) < 1e-6
    assert T.grad_check(lambda t: L.dense(x, t, b).square().sum(), w) < 1e-6


def test_batch_norm_train_statistics():
    x = randt((4, 3, 5, 5), seed=17)
    params = L.NormParams.identity(3, track_running=True, dtype=np.float64)
    out = L.batch_norm(x, params, mode="train").data
    assert np.allclose(out.mean(axis=(0, 2, 3)), 0, atol=1e-6)
    assert np.allclose(out.var(axis=(0, 2, 3)), 1, atol=1e-3)
    assert params.batches_seen == 1


def test_batch_norm_eval_uses_running_stats():
    params = L.NormParams.identity(2, track_running=True)
    params.batches_seen = 1  # stats left at (mean 0, var 1)
    params.scale = Tensor(np.array([2.0, 3.0], dtype=np.float32), requires_grad=True)
    params.shift = Tensor(np.array([0.5, -0.5], dtype=np.float32), requires_grad=True)
    x = randt((2, 2, 3, 3), seed=18, dtype=np.float32)
    out = L.batch_norm(x, params, mode="eval").data
    expected = (x.data / np.sqrt(1 + params.eps)
                * np.array([2.0, 3.0], dtype=np.float32).reshape(1, 2, 1, 1)
                + np.array([0.5, -0.5], dtype=np.float32).reshape(1, 2, 1, 1))
    assert np.allclose(out, expected, atol=1e-6)


def test_batch_norm_eval_before_stats():
    params = L.NormParams.identity(2, track_running=True)
    with pytest.raises(ConfigError):
        L.batch_norm(randt((1, 2, 3, 3)), params, mode="eval")


def test_batch_norm_gradcheck():
    params = L.NormParams.identity(2, dtype=np.float64)
    params.scale = Tensor(np.array([1.3, 0.7]), requires_grad=True)
    params.shift = Tensor(np.array([0.1, -0.2]), requires_grad=True)
    # project with fixed random weights: sum(norm(x)^2) is nearly constant,
    # which would make relative FD error meaningless
    proj = randt((2, 2, 4, 4), seed=190)

    def fn(t):
        return (L.batch_norm(t, params, mode="train") * proj).sum()

    assert T.grad_check(fn, randt((2, 2, 4, 4), seed=19)) < 1e-5


def test_instance_norm_statistics():
    x = randt((2, 3, 6, 6), seed=20)
    params = L.NormParams.identity(3, dtype=np.float64)
    out = L.instance_norm(x, params).data
    assert np.allclose(out.mean(axis=(2, 3)), 0, atol=1e-6)
    assert np.allclose(out.var(axis=(2, 3)), 1, atol=1e-3)


def test_instance_norm_constant_plane():
    x = Tensor(np.full((1, 1, 4, 4), 7.0))
    out = L.instance_norm(x, L.NormParams.identity(1, dtype=np.float64)).data
    assert np.allclose(out, 0.0)


def test_instance_norm_gradcheck():
    params = L.NormParams.identity(2, dtype=np.float64)
    proj = randt((2, 2, 4, 4), seed=210)

    def fn(t):
        return (L.instance_norm(t, params) * proj).sum()

    assert T.grad_check(fn, randt((2, 2, 4, 4), seed=21)) < 1e-5
