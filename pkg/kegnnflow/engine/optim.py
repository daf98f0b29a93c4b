"""Adam 优化器（带偏差修正）。默认 β1=0.9, β2=0.99, ε=1e-7。"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from kegnnflow.errors import ConfigError, DimensionError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-7
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    mask: Optional[Dict[str, np.ndarray]] = None,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """原地更新 params 并返回 (params, state)。

    mask 中给出的参数只更新掩码为 1 的元素（固定的子句权重掩码为 0）。
    没有梯度的参数保持不变，但步数仍然递增。
    """
    if lr <= 0:
        raise ConfigError(f"学习率必须为正数，得到 {lr}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step

    for name, g in grads.items():
        if name not in params:
            continue
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(f"参数 {name} 的梯度形状 {g.shape} 与参数 {p.shape} 不一致")
        if mask is not None and name in mask:
            g = g * mask[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        if mask is not None and name in mask:
            update = update * mask[name]
        p -= update
    return params, state
