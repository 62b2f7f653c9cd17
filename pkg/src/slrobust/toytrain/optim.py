"""Adam with L2 weight decay folded into the gradient, and a cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..daecore import Params


@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def cosine_lr(lr0: float, t: int, t_total: int) -> float:
    """``lr0 * (1 + cos(pi * t / t_total)) / 2``; reaches 0 at ``t = t_total``."""
    if t >= t_total:
        return 0.0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / t_total))


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    weight_decay: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Params:
    """One bias-corrected Adam update at step ``t`` (1-based); ``state`` is updated in place."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    out = {}
    for k, p in params.items():
        g = grads[k]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
        if weight_decay:
            g = g + weight_decay * p
        m = state.m.get(k)
        v = state.v.get(k)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out
