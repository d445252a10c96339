from __future__ import annotations

import numpy as np

from ..errors import StateError
from .nn import Parameter

DEFAULT_LR = 1e-3


def adam_step(params: list[Parameter], lr: float = DEFAULT_LR, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise StateError(f"adam_step: no gradient for {', '.join(missing)}")
    for p in params:
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1 - beta2) * g * g
        m_hat = p.adam_m / (1 - beta1 ** t)
        v_hat = p.adam_v / (1 - beta2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
        g[...] = 0


class Adam:
    """Holds a fixed parameter list and hyperparameters."""

    def __init__(self, params, lr: float = DEFAULT_LR, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps

    def step(self):
        adam_step(self.params, self.lr, self.betas[0], self.betas[1], self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
