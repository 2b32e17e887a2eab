"""AdamW with a warmup + cosine-annealing schedule.

Parameters are handled as a dict of named float64 arrays so the same
optimizer drives both the attention aggregator and the tile probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError


@dataclass
class OptimHyper:
    lr_peak: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-5
    warmup_steps: int = 0
    total_steps: int = 1
    lr_final: float = 0.0


def cosine_lr(step: int, hyper: OptimHyper) -> float:
    """Linear ramp to lr_peak over warmup_steps, cosine decay to lr_final."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step < hyper.warmup_steps:
        return hyper.lr_peak * step / hyper.warmup_steps
    if step > hyper.total_steps:
        return hyper.lr_final
    span = hyper.total_steps - hyper.warmup_steps
    progress = (step - hyper.warmup_steps) / span if span > 0 else 0.0
    return hyper.lr_final + 0.5 * (hyper.lr_peak - hyper.lr_final) * (
        1.0 + math.cos(math.pi * progress)
    )


@dataclass
class OptimState:
    hyper: OptimHyper
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], hyper: OptimHyper) -> "OptimState":
        return cls(
            hyper=hyper,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(state: OptimState, params: dict[str, np.ndarray],
               grads: dict[str, np.ndarray]) -> OptimState:
    """Decoupled-weight-decay update in place; advances state.step by 1."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient")
    lr = cosine_lr(state.step, state.hyper)
    b1, b2 = state.hyper.betas
    t = state.step + 1
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * state.hyper.weight_decay * p
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.hyper.eps)
    state.step = t
    return state
