"""Adam optimizer over named parameter dicts.

Updates are applied in sorted name order with a fixed elementwise formula,
so a (seed, gradient stream) pair always produces bit-identical parameter
trajectories.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class Adam:
    """Standard Adam with bias correction.

    The optimizer mutates the arrays of ``params`` in place; hand it the
    same dict the forward pass binds, or a sub-dict to freeze the rest.
    ``maximize`` flips the update for gradient ascent.
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        maximize: bool = False,
    ):
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.sign = 1.0 if maximize else -1.0
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name in sorted(self.params):
            g = grads.get(name)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            self.params[name] += self.sign * self.lr * update
