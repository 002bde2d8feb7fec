from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .tensor import Tensor


# the denominator is always positive, so numpy's error model (no zero-division
# check per element) is safe and lets the loop vectorise
@njit(cache=True, error_model="numpy")
def _fused_update(p, g, m, v, b1, b2, step, eps_hat):
    p = p.reshape(-1)
    g = g.reshape(-1)
    m = m.reshape(-1)
    v = v.reshape(-1)
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (np.sqrt(vi) + eps_hat)


@dataclass
class AdamState:
    """Moment accumulators, keyed by parameter name, plus the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray | Tensor],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update, applied in place to ``params``.

    Missing or ``None`` gradients count as zero, so the moments of parameters
    that did not take part in the step still decay.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    step = lr * np.sqrt(1.0 - b2**state.t) / (1.0 - b1**state.t)
    eps_hat = state.eps * np.sqrt(1.0 - b2**state.t)
    for name, p in params.items():
        if isinstance(p, Tensor):
            p = p.data
        g = grads.get(name)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        if m.shape != p.shape:
            raise ValueError(f"adam: moment shape {m.shape} != parameter {name} shape {p.shape}")
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise ValueError(f"adam: gradient shape {g.shape} != parameter {name} shape {p.shape}")
        # p -= lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections folded into
        # step and eps_hat; contiguous buffers let the kernel update in place
        _fused_update(p, np.ascontiguousarray(g), m, v, b1, b2, step, eps_hat)


class Adam:
    """Adam over a fixed, named set of tensors."""

    def __init__(self, named: dict[str, Tensor], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = named
        self.lr = lr
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        adam_step(
            {k: p.data for k, p in self.params.items()},
            {k: p.grad for k, p in self.params.items()},
            self.state,
            self.lr,
        )
