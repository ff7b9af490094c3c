"""Adam with bias correction."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Update ``params`` (name -> array) in place from ``grads`` (name -> array or None).

    Parameters whose gradient is None still advance the shared step count but
    keep their value and moments.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params, state


class Adam:
    """Convenience wrapper driving :func:`adam_step` over a module's parameters."""

    def __init__(self, module, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.module = module
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self):
        named = self.module.named_parameters()
        params = {k: t.value for k, t in named.items()}
        grads = {k: t.grad for k, t in named.items()}
        adam_step(params, grads, self.state)

    def zero_grad(self):
        self.module.zero_grad()
