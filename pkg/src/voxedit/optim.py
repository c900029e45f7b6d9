"""Adam with bias correction, fixed betas/eps, batch-size-1 training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import ModelParams

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            t=0,
            m={n: np.zeros_like(t) for n, t in params.tensors.items()},
            v={n: np.zeros_like(t) for n, t in params.tensors.items()},
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-4,
) -> tuple[ModelParams, AdamState]:
    """One Adam update; params and state are updated in place and returned."""
    if set(grads) != set(params.tensors):
        raise ValueError("gradient keys do not match parameters")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {name}")
        if g.shape != params.tensors[name].shape:
            raise ValueError(f"gradient shape mismatch for {name}")
    state.t += 1
    bc1 = 1.0 - BETA1**state.t
    bc2 = 1.0 - BETA2**state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * np.square(g)
        mhat = m / bc1
        vhat = v / bc2
        params.tensors[name] -= (lr * mhat / (np.sqrt(vhat) + EPS)).astype(np.float32)
    return params, state
