"""
Parameterized building blocks

Module keeps its parameters and sub-modules as plain attributes;
parameters() walks them in attribute order and returns dotted names, which
are also the names used in checkpoints.
"""

from __future__ import annotations
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from guidedplan.errors import ShapeError
from . import ops
from .tensor import ArrayLike, Tensor, as_tensor


class Module:

    def parameters(self, prefix: str = '') -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for _k, _v in vars(self).items():
            name = f'{prefix}{_k}'
            if isinstance(_v, Tensor) and _v.requires_grad:
                params[name] = _v
            elif isinstance(_v, Module):
                params.update(_v.parameters(prefix=f'{name}.'))
            elif isinstance(_v, (list, tuple)):
                for _i, _m in enumerate(_v):
                    if isinstance(_m, Module):
                        params.update(_m.parameters(prefix=f'{name}.{_i}.'))
        return params

    def modules(self) -> Iterator['Module']:
        yield self
        for _v in vars(self).values():
            if isinstance(_v, Module):
                yield from _v.modules()
            elif isinstance(_v, (list, tuple)):
                for _m in _v:
                    if isinstance(_m, Module):
                        yield from _m.modules()

    def zero_grad(self) -> None:
        for _p in self.parameters().values():
            _p.zero_grad()

    def after_step(self) -> None:
        """ Called by optimizers after every update, e.g. to re-project
        constrained parameters """

    def apply_after_step(self) -> None:
        for _m in self.modules():
            _m.after_step()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {_k: _v.values.copy() for _k, _v in self.parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray],
                        strict: bool = True) -> None:
        params = self.parameters()
        if strict:
            missing = sorted(set(params) - set(state))
            if missing:
                raise ShapeError(f'missing parameters in state: {missing}')
        for _k, _p in params.items():
            if _k not in state:
                continue
            value = np.asarray(state[_k])
            if value.shape != _p.shape:
                raise ShapeError(
                    f'{_k}: checkpoint shape {value.shape} != {_p.shape}')
            _p.values[...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def param(values: np.ndarray) -> Tensor:
    return Tensor(values, requires_grad=True)


class Linear(Module):
    """ y = x W + b, W [d_in, d_out] """

    def __init__(self,
                 d_in: int,
                 d_out: int,
                 rng: np.random.Generator,
                 bias: bool = True) -> None:
        bound = 1.0 / math.sqrt(d_in)
        self.d_in = d_in
        self.d_out = d_out
        self.weight = param(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias = param(np.zeros(d_out)) if bias else None

    def forward(self, x: ArrayLike) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.d_in:
            raise ShapeError(
                f'Linear: input {x.shape} does not match weight {self.weight.shape}'
            )
        flat = x if x.ndim >= 2 else ops.reshape(x, (1, self.d_in))
        y = ops.matmul(flat, self.weight)
        if self.bias is not None:
            y = ops.add(y, self.bias)
        return y if x.ndim >= 2 else ops.reshape(y, (self.d_out, ))


class LayerNorm(Module):

    def __init__(self, d: int, eps: float = 1e-5) -> None:
        self.eps = eps
        self.weight = param(np.ones(d))
        self.bias = param(np.zeros(d))

    def forward(self, x: ArrayLike) -> Tensor:
        return ops.add(ops.mul(ops.layer_norm(x, self.eps), self.weight),
                       self.bias)


class MLP(Module):
    """ Two-layer perceptron with a GELU in between """

    def __init__(self,
                 d_in: int,
                 d_hidden: int,
                 d_out: int,
                 rng: np.random.Generator) -> None:
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def forward(self, x: ArrayLike) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class Embedding(Module):

    def __init__(self, n: int, d: int, rng: np.random.Generator) -> None:
        self.n = n
        self.table = param(rng.normal(0.0, 0.02, size=(n, d)))

    def forward(self, ids: List[int]) -> Tensor:
        return ops.take_rows(self.table, ids)


class MultiHeadAttention(Module):
    """ Scaled dot-product attention over h heads

    Query rows attend over key rows; values share the key row order. The
    optional boolean mask is [n, m] with True where query i may attend to
    key j.

    Attributes:
        d (int): model width D
        heads (int): head count h, D must be divisible by h
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator) -> None:
        if heads <= 0 or d % heads != 0:
            raise ShapeError(f'width {d} is not divisible by {heads} heads')
        self.d = d
        self.heads = heads
        self.q_proj = Linear(d, d, rng)
        self.k_proj = Linear(d, d, rng)
        self.v_proj = Linear(d, d, rng)
        self.out_proj = Linear(d, d, rng)

    def _split(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        dh = self.d // self.heads
        return ops.transpose(ops.reshape(x, (n, self.heads, dh)), (1, 0, 2))

    def forward(self,
                q: ArrayLike,
                k: ArrayLike,
                v: ArrayLike,
                mask: Optional[np.ndarray] = None,
                return_weights: bool = False):
        q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2 or \
                q.shape[1] != self.d or k.shape[1] != self.d or \
                v.shape != k.shape:
            raise ShapeError(
                f'attention: query {q.shape}, key {k.shape}, value {v.shape} '
                f'for width {self.d}')
        n, m = q.shape[0], k.shape[0]
        qh = self._split(self.q_proj(q))
        kh = self._split(self.k_proj(k))
        vh = self._split(self.v_proj(v))
        logits = ops.scale(ops.matmul(qh, ops.transpose(kh, (0, 2, 1))),
                           1.0 / math.sqrt(self.d // self.heads))
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (n, m):
                raise ShapeError(
                    f'attention: mask {mask.shape} for scores {(n, m)}')
            logits = ops.masked_fill(logits, ~mask[None, :, :], -1e30)
        weights = ops.softmax(logits, axis=-1)
        ctx = ops.matmul(weights, vh)
        ctx = ops.reshape(ops.transpose(ctx, (1, 0, 2)), (n, self.d))
        out = self.out_proj(ctx)
        if return_weights:
            return out, weights
        return out


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def count_parameters(module: Module) -> Tuple[int, int]:
    params = module.parameters()
    return len(params), int(sum(_p.size for _p in params.values()))
