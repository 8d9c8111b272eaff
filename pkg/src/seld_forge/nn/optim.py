"""AdamW with decoupled weight decay and the two-stage learning-rate drop."""
from __future__ import annotations

import numpy as np


def two_stage_lr(epoch: int, n_epochs: int, base_lr: float, final_lr: float, switch_fraction: float = 0.9) -> float:
    """base_lr for the first switch_fraction of epochs, final_lr after.

    With 100 epochs and the defaults this is 3e-4 for epochs 0-89 and
    3e-5 for epochs 90-99; shorter runs scale the switch point.
    """
    switch = int(np.floor(n_epochs * switch_fraction))
    return base_lr if epoch < switch else final_lr


class AdamW:
    def __init__(self, params: dict, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float | None = None):
        """In-place update; iteration order is fixed (sorted names)."""
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name in sorted(params):
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] = params[name] - lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params[name]
            )
