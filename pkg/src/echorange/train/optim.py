"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingAborted

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, lr: float = 1e-3
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One in-place Adam update of every array in ``params``.

    Raises:
        TrainingAborted: if any gradient is non-finite; ``params`` and
            ``state`` are left untouched in that case.
    """
    bad = [k for k in params if not np.all(np.isfinite(grads[k]))]
    if bad:
        raise TrainingAborted(f"non-finite gradient at step {state.t + 1} in {bad}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for k, theta in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(theta)
            state.v[k] = np.zeros_like(theta)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(theta.dtype)
    return params, state
