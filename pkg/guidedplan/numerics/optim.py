"""
AdamW and learning-rate schedules
"""

from __future__ import annotations
import math
from typing import Dict, Optional, Tuple

import numpy as np

from guidedplan.errors import ConfigError, ShapeError
from .tensor import Tensor


def adamw_step(params: Dict[str, np.ndarray],
               grads: Dict[str, np.ndarray],
               lr: float,
               betas: Tuple[float, float] = (0.9, 0.999),
               weight_decay: float = 0.01,
               state: Optional[Dict[str, dict]] = None,
               eps: float = 1e-8) -> Dict[str, np.ndarray]:
    """ One decoupled-weight-decay Adam update

    Args:
        params: name -> current values
        grads: name -> gradient, same shapes; a missing name is left unchanged
        lr: learning rate, must be > 0
        betas: first and second moment decay
        weight_decay: decoupled decay coefficient
        state: per-name moment buffers, updated in place; pass the same dict
            on every step

    Returns:
        name -> updated values (new arrays)
    """

    if lr <= 0:
        raise ConfigError(f'learning rate must be > 0, got {lr}')
    if state is None:
        state = {}
    b1, b2 = betas
    updated = {}
    for _k, _p in params.items():
        g = grads.get(_k)
        if g is None:
            updated[_k] = _p
            continue
        if g.shape != _p.shape:
            raise ShapeError(
                f'{_k}: gradient {g.shape} does not match parameter {_p.shape}'
            )
        st = state.setdefault(_k, {
            'step': 0,
            'm': np.zeros_like(_p),
            'v': np.zeros_like(_p)
        })
        st['step'] += 1
        st['m'] = b1 * st['m'] + (1.0 - b1) * g
        st['v'] = b2 * st['v'] + (1.0 - b2) * g * g
        m_hat = st['m'] / (1.0 - b1**st['step'])
        v_hat = st['v'] / (1.0 - b2**st['step'])
        new = _p * (1.0 - lr * weight_decay)
        updated[_k] = new - lr * m_hat / (np.sqrt(v_hat) + eps)
    return updated


class AdamW:
    """ Stateful AdamW over a set of parameter tensors

    Parameters are updated in place from their accumulated .grad; names
    not present in <params> (frozen components) are never touched.
    """

    def __init__(self,
                 params: Dict[str, Tensor],
                 lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999),
                 weight_decay: float = 0.01,
                 max_grad_norm: Optional[float] = None) -> None:
        if lr <= 0:
            raise ConfigError(f'learning rate must be > 0, got {lr}')
        self.params = params
        self.lr = lr
        self.betas = betas
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.state: Dict[str, dict] = {}

    def grad_norm(self) -> float:
        total = 0.0
        for _p in self.params.values():
            if _p.grad is not None:
                total += float((_p.grad**2).sum())
        return math.sqrt(total)

    def step(self, lr: Optional[float] = None) -> None:
        grads = {
            _k: _p.grad
            for _k, _p in self.params.items() if _p.grad is not None
        }
        if self.max_grad_norm is not None:
            norm = self.grad_norm()
            if norm > self.max_grad_norm:
                grads = {
                    _k: _g * (self.max_grad_norm / norm)
                    for _k, _g in grads.items()
                }
        values = {_k: _p.values for _k, _p in self.params.items()}
        updated = adamw_step(values, grads, lr if lr is not None else self.lr,
                             self.betas, self.weight_decay, self.state)
        for _k, _p in self.params.items():
            _p.values[...] = updated[_k]

    def zero_grad(self) -> None:
        for _p in self.params.values():
            _p.zero_grad()


class WarmupCosine:
    """ Linear warm-up to <peak_lr>, then cosine decay to <final_lr> """

    def __init__(self,
                 peak_lr: float,
                 total_steps: int,
                 warmup_steps: int = 0,
                 final_lr: float = 0.0) -> None:
        if peak_lr <= 0 or total_steps <= 0:
            raise ConfigError('peak_lr and total_steps must be > 0')
        self.peak_lr = peak_lr
        self.total_steps = total_steps
        self.warmup_steps = warmup_steps
        self.final_lr = final_lr

    def __call__(self, step: int) -> float:
        if self.warmup_steps and step < self.warmup_steps:
            return self.peak_lr * (step + 1) / self.warmup_steps
        span = max(1, self.total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / span)
        lr = self.final_lr + 0.5 * (self.peak_lr - self.final_lr) * (
            1.0 + math.cos(math.pi * progress))
        # AdamW rejects lr <= 0
        return max(lr, 1e-12)
