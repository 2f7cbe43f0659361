# core/optimizer.py
"""
ADAM Optimizer & Learning-Rate Schedule
---------------------------------------
Bias-corrected ADAM with coupled L2 weight decay, and the step-decay
schedule base_lr * factor^floor(epoch / period).
"""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Mapping, Tuple

import numpy as np

from core.errors import NonFiniteError, ShapeError

if TYPE_CHECKING:
    from core.network import Parameters
    from core.trainer import TrainConfig

logger = logging.getLogger("core.optimizer")


@dataclass
class OptimizerState:
    """First/second moments per parameter name and the global step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: "Parameters") -> "OptimizerState":
        return cls(
            m={name: np.zeros_like(t.data) for name, t in params.items()},
            v={name: np.zeros_like(t.data) for name, t in params.items()},
            step=0,
        )


def lr_at_epoch(epoch: int, config: "TrainConfig") -> float:
    """Learning rate for a zero-based epoch index."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return config.base_lr * config.lr_decay_factor ** (epoch // config.lr_decay_period)


def adam_step(params: "Parameters", grads: Mapping[str, np.ndarray], state: OptimizerState,
              lr: float, config: "TrainConfig") -> Tuple["Parameters", OptimizerState]:
    """
    One ADAM update over every parameter.

    Weight decay is added to the raw gradient before the moment updates.
    Parameters and moments are replaced with new arrays; nothing aliases
    the previous step's buffers.

    Args:
        params: Parameters to update
        grads: Gradient per parameter name (all names required)
        state: Moments and step counter
        lr: Learning rate for this step
        config: Supplies beta1, beta2, epsilon and weight_decay

    Returns:
        (params, state) after the update
    """
    for name, param in params.items():
        if name not in grads:
            raise ShapeError(f"missing gradient for {name}", param.shape)
        g = grads[name]
        if g.shape != param.shape:
            raise ShapeError(f"gradient shape mismatch for {name}", g.shape, param.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient", name)
        if name not in state.m or state.m[name].shape != param.shape:
            raise ShapeError(f"optimizer moment missing or mismatched for {name}", param.shape)

    step = state.step + 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step
    for name, param in params.items():
        dtype = param.data.dtype
        g = grads[name].astype(dtype, copy=False)
        if config.weight_decay:
            g = g + dtype.type(config.weight_decay) * param.data
        m = dtype.type(b1) * state.m[name] + dtype.type(1.0 - b1) * g
        v = dtype.type(b2) * state.v[name] + dtype.type(1.0 - b2) * (g * g)
        m_hat = m / dtype.type(correction1)
        v_hat = v / dtype.type(correction2)
        param.data = param.data - dtype.type(lr) * m_hat / (np.sqrt(v_hat) + dtype.type(config.epsilon))
        state.m[name] = m
        state.v[name] = v
    state.step = step
    return params, state
