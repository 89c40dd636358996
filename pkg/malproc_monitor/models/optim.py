"""Adam optimizer over a dict of named numpy parameters."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

Params = Dict[str, np.ndarray]


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Params, beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        return cls(
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
        )


def adam_step(params: Params, grads: Params, state: AdamState, lr: float = 1e-3) -> Params:
    """Apply one bias-corrected Adam update in place and return ``params``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    for name, value in params.items():
        grad = grads[name]
        m = state.m.setdefault(name, np.zeros_like(value))
        v = state.v.setdefault(name, np.zeros_like(value))
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        value -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
