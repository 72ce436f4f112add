"""Adam with decoupled weight decay over a named parameter dict."""

from __future__ import annotations

import numpy as np

__all__ = ["AdamW"]


class AdamW:
    """Adaptive-moment optimizer; weight decay is decoupled from the moment
    update and skipped for parameters listed in ``no_decay``."""

    def __init__(self, param_names, weight_decay: float = 5e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 no_decay: frozenset[str] | set[str] = frozenset()):
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.no_decay = set(no_decay)
        self.m = {name: None for name in param_names}
        self.v = {name: None for name in param_names}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in params:
            g = grads[name]
            if self.m[name] is None:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            if name not in self.no_decay:
                update = update + self.weight_decay * params[name]
            params[name] -= lr * update
