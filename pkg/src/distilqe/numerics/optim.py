"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DimensionError


@dataclass
class AdamState:
    """Optimizer moments keyed by parameter name.

    Defaults (lr 1e-3, betas 0.9/0.999, eps 1e-8) are the usual Adam settings
    and are what the student trainer uses unless configured otherwise.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    scratch: dict = field(default_factory=dict, repr=False, compare=False)


def adam_step(params, gradients, state):
    """Apply one Adam update in place and return ``(params, state)``.

    ``params`` and ``gradients`` are dicts of arrays with matching keys and
    shapes.  Moments are created lazily on the first step.
    """
    for name, p in params.items():
        g = gradients[name]
        if g.shape != p.shape:
            raise DimensionError(f"adam_step: gradient for {name!r} has shape {g.shape}, param has {p.shape}")
        if name in state.m and state.m[name].shape != p.shape:
            raise DimensionError(f"adam_step: moment for {name!r} has shape {state.m[name].shape}, param has {p.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    step_size = state.learning_rate / correction1
    for name, p in params.items():
        g = gradients[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        # in-place updates with one scratch buffer per parameter; the
        # embedding tables dominate the cost of a step otherwise
        tmp = state.scratch.get(name)
        if tmp is None or tmp.shape != p.shape:
            tmp = state.scratch[name] = np.empty_like(p)
        m *= b1
        np.multiply(g, 1.0 - b1, out=tmp)
        m += tmp
        v *= b2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v += tmp
        np.divide(v, correction2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.epsilon
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p -= tmp
    return params, state
