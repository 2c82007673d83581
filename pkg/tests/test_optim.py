import numpy as np
import pytest

from durnet import networks as N
from durnet.errors import ConfigError, ContractError
from durnet.optim import AdamConfig, AdamState, adam_step
from durnet.tensor import Tensor


class DictStore:
    def __init__(self, arrays):
        self._params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}

    def items(self):
        return self._params.items()

    def __getitem__(self, k):
        return self._params[k]


def test_config_validation():
    with pytest.raises(ConfigError):
        AdamConfig(lr=0)
    with pytest.raises(ConfigError):
        AdamConfig(beta1=1.0)


def test_zero_gradients_leave_params():
    store = DictStore({"w": np.array([1.0, 2.0], dtype=np.float32)})
    state = AdamState()
    adam_step(store, {"w": np.zeros(2)}, state, AdamConfig())
    assert np.array_equal(store["w"].data, [1.0, 2.0])
    assert state.t == 1


def test_first_step_magnitude_is_lr():
    # bias correction cancels the gradient scale on step one
    for g in (0.001, 1.0, 250.0):
        store = DictStore({"w": np.array([0.0], dtype=np.float64)})
        adam_step(store, {"w": np.array([g])}, AdamState(), AdamConfig(lr=0.01))
        assert abs(abs(store["w"].data[0]) - 0.01) < 0.01 * 1e-4


def test_scale_equivariance_at_step_one():
    updates = []
    for scale in (1.0, 7.3):
        store = DictStore({"w": np.array([0.5], dtype=np.float64)})
        adam_step(store, {"w": np.array([scale * 0.2])}, AdamState(), AdamConfig(lr=0.01))
        updates.append(0.5 - store["w"].data[0])
    assert abs(updates[0] - updates[1]) < 1e-6


def test_missing_gradient_is_contract_error():
    store = DictStore({"w": np.zeros(2, dtype=np.float32),
                       "b": np.zeros(2, dtype=np.float32)})
    with pytest.raises(ContractError):
        adam_step(store, {"w": np.ones(2)}, AdamState(), AdamConfig())


def test_frozen_parameters_skipped():
    store = DictStore({"w": np.zeros(2, dtype=np.float32),
                       "b": np.ones(2, dtype=np.float32)})
    adam_step(store, {"w": np.ones(2)}, AdamState(), AdamConfig(), frozen={"b"})
    assert np.array_equal(store["b"].data, [1.0, 1.0])
    assert np.any(store["w"].data != 0)


def test_quadratic_minimization():
    # 100 steps on (theta - 3)^2 from 0 with lr 0.1; oracle below runs the
    # same recursion in plain floats
    cfg = AdamConfig(lr=0.1)
    store = DictStore({"theta": np.array([0.0], dtype=np.float64)})
    state = AdamState()
    theta_ref, m, v = 0.0, 0.0, 0.0
    for t in range(1, 101):
        g = 2 * (store["theta"].data[0] - 3.0)
        adam_step(store, {"theta": np.array([g])}, state, cfg)
        g_ref = 2 * (theta_ref - 3.0)
        m = 0.9 * m + 0.1 * g_ref
        v = 0.999 * v + 0.001 * g_ref * g_ref
        theta_ref -= 0.1 * (m / (1 - 0.9 ** t)) / ((v / (1 - 0.999 ** t)) ** 0.5 + 1e-8)
    assert abs(store["theta"].data[0] - 3.0) < 0.1
    assert store["theta"].data[0] == pytest.approx(theta_ref, abs=1e-9)


def test_adam_on_network_store():
    net = N.build_network("durn_p", n_blocks=1, base_channels=16)
    grads = {name: np.full_like(t.data, 0.5) for name, t in net.store.items()}
    before = {name: t.data.copy() for name, t in net.store.items()}
    adam_step(net.store, grads, AdamState(), AdamConfig(lr=1e-3))
    changed = [name for name, t in net.store.items()
               if not np.array_equal(t.data, before[name])]
    assert len(changed) == len(before)
