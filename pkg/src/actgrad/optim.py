"""RMSProp and the staged learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ActgradError, ShapeError

# (last epoch of the stage, learning rate); epochs past the final boundary use FINAL_LR
LR_STAGES = ((20, 1e-3), (40, 1e-4), (60, 1e-5))
FINAL_LR = 1e-6


def lr_schedule(epoch: int, scale: float = 1.0) -> float:
    if epoch < 1:
        raise ActgradError(f"epochs are counted from 1, got {epoch}")
    for last, lr in LR_STAGES:
        if epoch <= last:
            return lr * scale
    return FINAL_LR * scale


@dataclass
class RMSProp:
    """Plain RMSProp: ``s <- rho s + (1 - rho) g^2``; ``theta <- theta - lr g / (sqrt(s) + eps)``."""

    rho: float = 0.95
    epsilon: float = 1e-8
    accumulators: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float, constrain=None):
        """Update ``params`` in place. ``constrain`` runs afterwards, e.g. ``Network.apply_constraints``."""
        if params.keys() != grads.keys():
            raise ShapeError(f"parameter and gradient names differ: {sorted(set(params) ^ set(grads))}")
        for name, theta in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != np.shape(theta):
                raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {np.shape(theta)}",
                                 g.shape, np.shape(theta))
            s = self.accumulators.get(name)
            if s is None:
                s = np.zeros_like(g)
            s = self.rho * s + (1.0 - self.rho) * g * g
            self.accumulators[name] = s
            params[name] = theta - lr * g / (np.sqrt(s) + self.epsilon)
        if constrain is not None:
            constrain()
        return params


def rmsprop_step(state: RMSProp, params: dict, grads: dict, lr: float, constrain=None):
    return state.step(params, grads, lr, constrain)
