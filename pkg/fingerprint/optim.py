from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeError


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """
    One bias-corrected Adam update, in place.

    ``params`` and ``grads`` map parameter names to arrays; names missing
    from ``grads`` (no gradient this step) are left untouched.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != value.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {value.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


def step_encoder(encoder_params, state):
    """Adam step over every encoder tensor that received a gradient."""
    named = list(encoder_params.named_parameters())
    values = {name: t.values for name, t in named}
    grads = {name: t.grad for name, t in named if t.grad is not None}
    adam_step(values, grads, state)
