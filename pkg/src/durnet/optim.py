"""Adam with bias correction.

    m_t = b1 m_{t-1} + (1 - b1) g
    v_t = b2 v_{t-1} + (1 - b2) g^2
    theta -= lr * (m_t / (1 - b1^t)) / (sqrt(v_t / (1 - b2^t)) + eps)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        for b in (self.beta1, self.beta2):
            if not 0 <= b < 1:
                raise ConfigError(f"betas must lie in [0, 1), got {b}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(store, grads: dict[str, np.ndarray], state: AdamState,
              cfg: AdamConfig, frozen: frozenset[str] | set[str] = frozenset()) -> AdamState:
    """One in-place update of every parameter in `store`.

    `grads` must carry one array per non-frozen parameter name; a missing
    gradient is a contract violation, not a silent skip.
    """
    state.t += 1
    t = state.t
    corr1 = 1.0 - cfg.beta1 ** t
    corr2 = 1.0 - cfg.beta2 ** t
    for name, param in store.items():
        if name in frozen:
            continue
        if name not in grads:
            raise ContractError(f"no gradient supplied for parameter {name!r}")
        g = np.asarray(grads[name], dtype=param.data.dtype)
        if g.shape != param.data.shape:
            raise ContractError(
                f"gradient shape {g.shape} != parameter shape {param.data.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        v = state.v[name]
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        param.data -= cfg.lr * (m / corr1) / (np.sqrt(v / corr2) + cfg.eps)
    return state
