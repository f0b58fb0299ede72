"""AdamW, global-norm clipping and cosine annealing with warm restarts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Sgdr:
    lr_max: float = 3e-4
    eta_min: float = 3e-6
    t0: float = 20.0
    t_mult: float = 2.0

    def lr(self, epoch: float) -> float:
        """Learning rate at a fractional epoch."""
        t_i, t_cur = self.t0, float(epoch)
        while t_cur >= t_i:
            t_cur -= t_i
            t_i *= self.t_mult
        return self.eta_min + 0.5 * (self.lr_max - self.eta_min) * (1 + math.cos(math.pi * t_cur / t_i))


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def clip_by_global_norm(grads: dict, max_norm: float):
    norm = global_norm(grads)
    if norm > max_norm:
        s = max_norm / (norm + 1e-12)
        grads = {k: g * s for k, g in grads.items()}
    return grads, norm


class AdamW:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, params: dict, weight_decay: float = 1e-5, betas=(0.9, 0.999), eps: float = 1e-8):
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p *= 1 - lr * self.wd
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
