"""AdamW and RAdam with decoupled weight decay.

Both follow the published update rules.  RAdam rectifies the adaptive
step only once the variance-rectification term is defined (rho_t > 4)
and falls back to the non-adaptive bias-corrected step before that.
"""
from __future__ import annotations

import math
from typing import List, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ValidationError


class Optimizer:
    kind = "base"

    def __init__(self, params: Sequence[Tensor], lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params: List[Tensor] = list(params)
        if not self.params:
            raise ValidationError("optimizer needs at least one parameter")
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _gather_grads(self) -> List[np.ndarray]:
        grads = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValidationError(f"parameter {i} ({p.name or 'unnamed'}) has no gradient")
            grads.append(p.grad)
        return grads

    def step(self) -> None:
        raise NotImplementedError


class AdamW(Optimizer):
    """Adam with decoupled weight decay (default 0.01)."""

    kind = "AdamW"

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        super().__init__(params, lr, betas, eps, weight_decay)

    def step(self) -> None:
        grads = self._gather_grads()
        self.step_count += 1
        t = self.step_count
        bc1 = 1 - self.beta1 ** t
        bc2 = 1 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class RAdam(Optimizer):
    """Rectified Adam (default weight decay 0)."""

    kind = "RAdam"

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        super().__init__(params, lr, betas, eps, weight_decay)
        self.rho_inf = 2.0 / (1.0 - self.beta2) - 1.0

    def step(self) -> None:
        grads = self._gather_grads()
        self.step_count += 1
        t = self.step_count
        bc1 = 1 - self.beta1 ** t
        bc2 = 1 - self.beta2 ** t
        rho_t = self.rho_inf - 2.0 * t * self.beta2 ** t / bc2
        rectified = rho_t > 4.0
        if rectified:
            r_num = (rho_t - 4.0) * (rho_t - 2.0) * self.rho_inf
            r_den = (self.rho_inf - 4.0) * (self.rho_inf - 2.0) * rho_t
            r_t = math.sqrt(r_num / r_den)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            m_hat = m / bc1
            if rectified:
                v_hat = np.sqrt(v / bc2)
                p.data -= self.lr * r_t * m_hat / (v_hat + self.eps)
            else:
                p.data -= self.lr * m_hat


OPTIMIZERS = {"AdamW": AdamW, "RAdam": RAdam}


def make_optimizer(kind: str, params, lr: float, **kwargs) -> Optimizer:
    if kind not in OPTIMIZERS:
        raise ValidationError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}")
    return OPTIMIZERS[kind](params, lr, **kwargs)


__all__ = ["Optimizer", "AdamW", "RAdam", "OPTIMIZERS", "make_optimizer"]
