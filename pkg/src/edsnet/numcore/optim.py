"""Adam with an L2 penalty folded into the gradient."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    Parameters without an entry in ``grads`` are treated as having zero gradient.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.data.shape}")
        if weight_decay:
            g = g + weight_decay * p.data
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * state.v[name] + (1 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data = (p.data - update).astype(p.data.dtype)
    return state
