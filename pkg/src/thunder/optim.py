"""Adam with bias correction, the step-decay schedule and gradient clipping."""

import math
from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, beta1=BETA1, beta2=BETA2, eps=EPS):
    """One in-place Adam update.

    ``params`` maps name -> Parameter (or plain array), ``grads`` maps
    name -> gradient array; missing gradients count as zero.
    """
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        value = p.data if hasattr(p, "assign") else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        if g.shape != value.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {value.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (lr / c1) * m / (np.sqrt(v / c2) + eps)
        value -= update.astype(value.dtype, copy=False)


def lr_at(step, lr0, decay_every):
    """lr0 * 0.5 ** floor(step / decay_every)."""
    if decay_every <= 0:
        return lr0
    return lr0 * 0.5 ** (step // decay_every)


def clip_grad_norm(grads, max_norm):
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total
