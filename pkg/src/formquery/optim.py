"""Adam optimizer with bias correction and decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Node


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam(params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0) -> AdamState:
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay,
        m=[np.zeros_like(p.value) for p in params],
        v=[np.zeros_like(p.value) for p in params],
    )


def adam_step(params: list[Node], grads, state: AdamState):
    """One Adam update, in place. grads may be None to read p.grad; a missing
    gradient means that parameter is untouched this step."""
    if len(state.m) != len(params):
        raise ValueError("AdamState was initialized for a different parameter list")
    state.step += 1
    for i, p in enumerate(params):
        g = grads[i] if grads is not None else p.grad
        if g is None:
            continue
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.value.shape}")
        kernels.adam_update(
            p.value, g, state.m[i], state.v[i], state.step,
            state.lr, state.beta1, state.beta2, state.eps, state.weight_decay,
        )
    return params, state
