"""Adam optimizer, functional core plus a parameter-list wrapper."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Parameter


@dataclass
class AdamState:
    """First/second-moment accumulators and step counter for one array."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, array: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(array), v=np.zeros_like(array))


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``param`` and ``state``."""
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grad
    state.v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1**state.t)
    v_hat = state.v / (1 - beta2**state.t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


@dataclass
class Adam:
    """Adam over a list of :class:`Parameter`, one state per parameter."""

    params: list[Parameter]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(default_factory=list)

    def __post_init__(self):
        if not self.states:
            self.states = [AdamState.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, s in zip(self.params, self.states):
            adam_step(p.data, p.grad, s, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
