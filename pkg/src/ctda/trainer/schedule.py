"""
Learning-rate and temperature schedules, and the plain SGD update.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from ctda.errors import ConfigError


def cosine_lr(epoch: int, base_lr: float, period: int) -> float:
    """Cosine annealing restarted every ``period`` epochs."""
    if period <= 0:
        raise ConfigError(f"cosine period must be positive, got {period}")
    phase = (epoch % period) / period
    return base_lr * (1.0 + math.cos(math.pi * phase)) / 2.0


@dataclass(frozen=True)
class TemperatureSchedule:
    """
    Piecewise-linear temperature: ``start`` for ``hold_epochs``, then a linear ramp to
    ``end`` over ``decay_epochs``, then ``end``. With ``decay_epochs == 0`` it is constant.
    """

    start: float = 0.5
    end: float = 0.1
    hold_epochs: int = 0
    decay_epochs: int = 0

    def __post_init__(self):
        if not (self.start > 0 and self.end > 0):
            raise ConfigError(f"temperatures must be positive, got start={self.start} end={self.end}")
        if self.hold_epochs < 0 or self.decay_epochs < 0:
            raise ConfigError("schedule epoch counts must be non-negative")

    @classmethod
    def constant(cls, tau: float = 0.5) -> "TemperatureSchedule":
        return cls(start=tau, end=tau)

    @classmethod
    def staged(cls, start: float = 0.5, end: float = 0.1, hold_epochs: int = 50,
               decay_epochs: int = 100) -> "TemperatureSchedule":
        return cls(start, end, hold_epochs, decay_epochs)

    @property
    def is_constant(self) -> bool:
        return self.decay_epochs == 0 or self.start == self.end

    def __call__(self, epoch: int) -> float:
        if self.decay_epochs == 0:
            return self.start
        if epoch < self.hold_epochs:
            return self.start
        step = epoch - self.hold_epochs
        if step >= self.decay_epochs:
            return self.end
        return self.start + (self.end - self.start) * step / self.decay_epochs

    def to_dict(self) -> Dict[str, Any]:
        return {"start": self.start, "end": self.end, "hold_epochs": self.hold_epochs,
                "decay_epochs": self.decay_epochs}


def sgd_step(parameters: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float,
             weight_decay: float = 0.0) -> None:
    """In-place SGD without momentum; weight decay is added to the gradient."""
    if lr == 0.0:
        return
    for name, param in parameters.items():
        param -= lr * (grads[name] + weight_decay * param)
