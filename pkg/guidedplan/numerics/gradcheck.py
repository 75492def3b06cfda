"""
Finite-difference gradient checking
"""

from typing import Callable, List, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numeric_gradient(fn: Callable[[], Tensor],
                     x: Tensor,
                     eps: float = 1e-5) -> np.ndarray:
    """ Central differences of the scalar fn() with respect to x.values """

    grad = np.zeros_like(x.values)
    flat = x.values.reshape(-1)
    gflat = grad.reshape(-1)
    for _i in range(flat.size):
        orig = flat[_i]
        flat[_i] = orig + eps
        up = fn().item()
        flat[_i] = orig - eps
        down = fn().item()
        flat[_i] = orig
        gflat[_i] = (up - down) / (2.0 * eps)
    return grad


def analytic_gradient(fn: Callable[[], Tensor],
                      inputs: Sequence[Tensor]) -> List[np.ndarray]:
    for _x in inputs:
        _x.requires_grad = True
        _x.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return [
        _x.grad if _x.grad is not None else np.zeros_like(_x.values)
        for _x in inputs
    ]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-2) -> float:
    """ max elementwise |a - b| / max(|a| + |b|, floor) """

    denom = np.maximum(np.abs(a) + np.abs(b), floor)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


def check_gradients(fn: Callable[[], Tensor],
                    inputs: Sequence[Tensor],
                    eps: float = 1e-5) -> float:
    """ Worst relative error between reverse-mode and central differences

    Args:
        fn: rebuilds the scalar loss from the current input values
        inputs: tensors to differentiate with respect to

    Returns:
        the largest elementwise relative error over all inputs
    """

    analytic = analytic_gradient(fn, inputs)
    worst = 0.0
    for _x, _a in zip(inputs, analytic):
        worst = max(worst, relative_error(_a, numeric_gradient(fn, _x, eps)))
    return worst
