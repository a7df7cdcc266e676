"""Adam, global-norm clipping and the end-of-training learning-rate decay."""
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, NonFiniteError


class Adam:
    """Adam with bias correction, updating ``Tensor.data`` in place.

    >>> import numpy as np
    >>> from fetsgan.engine.tensor import Tensor
    >>> w = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
    >>> w.grad = np.array([1.0])
    >>> opt = Adam([w])
    >>> opt.step(1e-3)
    >>> round(float(w.data[0]), 6)
    0.999
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, rate):
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise ContractError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            elif not np.all(np.isfinite(g)):
                label = p.name or f"#{i}"
                raise NonFiniteError(f"non-finite gradient in parameter {label}; step aborted", name=label)
            grads.append(g)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= (rate * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state_arrays(self):
        return {"t": self.t, "m": self.m, "v": self.v}


def clip_grad_norm(params, max_norm):
    """Scale gradients so their global L2 norm is at most ``max_norm``; returns the norm."""
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params if p.grad is not None))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


@dataclass(frozen=True)
class LrSchedule:
    base_rate: float
    total_epochs: int
    decay_fraction: float = 0.1
    final_ratio: float = 0.1

    def __post_init__(self):
        if self.base_rate <= 0 or self.total_epochs < 1:
            raise ContractError("base_rate must be positive and total_epochs >= 1")
        if not 0 < self.decay_fraction <= 1 or not 0 < self.final_ratio <= 1:
            raise ContractError("decay_fraction and final_ratio must lie in (0, 1]")

    @property
    def decay_start(self):
        return (1.0 - self.decay_fraction) * self.total_epochs


def lr_at(schedule, epoch):
    """Flat base rate, then geometric decay reaching ``base * final_ratio`` at the last epoch."""
    if not 0 <= epoch <= schedule.total_epochs:
        raise ContractError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    start = schedule.decay_start
    if epoch <= start:
        return schedule.base_rate
    frac = (epoch - start) / (schedule.total_epochs - start)
    return schedule.base_rate * schedule.final_ratio ** frac
