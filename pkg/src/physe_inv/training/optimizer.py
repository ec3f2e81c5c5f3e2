"""Adam with bias correction over a ``ModelParams`` store."""
import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..autodiff import GradientMap
from ..exceptions import ConfigError, NumericError
from ..model import ModelParams

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    learning_rate: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"Configuration error: 'learning_rate' must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"Configuration error: betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.epsilon <= 0:
            raise ConfigError(f"Configuration error: 'adam_epsilon' must be positive, got {self.epsilon}")

    @classmethod
    def for_params(cls, params: ModelParams, **hyper) -> "OptimizerState":
        state = cls(**hyper)
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state


def adam_step(params: ModelParams, grads: GradientMap, state: OptimizerState) -> OptimizerState:
    """Applies one update in place. A parameter without a gradient sees a zero gradient."""
    for name in params:
        grad = grads.get(name)
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient for parameter '{name}'")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    for name, tensor in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        tensor.data -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)

    params.check_finite()
    return state
