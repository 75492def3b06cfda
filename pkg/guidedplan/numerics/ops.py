"""
Differentiable primitives

Shape rules are deliberately narrow: two operands either have the same
shape or one shape is a trailing suffix of the other (a bias over the
leading batch axes, or a scalar). Anything else needs an explicit
reshape and raises ShapeError naming both shapes.
"""

from __future__ import annotations
import builtins
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from guidedplan.errors import ShapeError
from guidedplan.scene.geometry import wrap_to_pi
from .tensor import ArrayLike, Tensor, as_tensor, record

Axis = Optional[Union[int, Tuple[int, ...]]]


def _suffix_shape(a: Tuple[int, ...], b: Tuple[int, ...],
                  op: str) -> Tuple[int, ...]:
    if a == b:
        return a
    if len(b) <= len(a) and a[len(a) - len(b):] == b:
        return a
    if len(a) <= len(b) and b[len(b) - len(a):] == a:
        return b
    raise ShapeError(f'{op}: incompatible shapes {a} and {b}')


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.reshape((-1, ) + tuple(shape)).sum(axis=0) if lead > 0 \
        else g.reshape(shape)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _suffix_shape(a.shape, b.shape, 'add')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(a.values + b.values, (a, b), backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _suffix_shape(a.shape, b.shape, 'sub')

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return record(a.values - b.values, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _suffix_shape(a.shape, b.shape, 'mul')

    def backward(g):
        return (_unbroadcast(g * b.values, a.shape),
                _unbroadcast(g * a.values, b.shape))

    return record(a.values * b.values, (a, b), backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _suffix_shape(a.shape, b.shape, 'div')
    out = a.values / b.values

    def backward(g):
        return (_unbroadcast(g / b.values, a.shape),
                _unbroadcast(-g * out / b.values, b.shape))

    return record(out, (a, b), backward)


def scale(a: ArrayLike, c: float) -> Tensor:
    a = as_tensor(a)
    return record(a.values * c, (a, ), lambda g: (g * c, ))


def neg(a: ArrayLike) -> Tensor:
    return scale(a, -1.0)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """ [..., n, k] @ [k, m] or [..., n, k] @ [..., k, m] with equal batch """

    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or \
            (b.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f'matmul: incompatible shapes {a.shape} and {b.shape}')

    def backward(g):
        ga = g @ np.swapaxes(b.values, -1, -2)
        if b.ndim == 2:
            gb = a.values.reshape(-1, a.shape[-1]).T @ g.reshape(
                -1, g.shape[-1])
        else:
            gb = np.swapaxes(a.values, -1, -2) @ g
        return ga, gb

    return record(a.values @ b.values, (a, b), backward)


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)
    return record(out, (a, ), lambda g: (g * out, ))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return record(np.log(a.values), (a, ), lambda g: (g / a.values, ))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return record(a.values**2, (a, ), lambda g: (2.0 * g * a.values, ))


def abs(a: ArrayLike) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return record(np.abs(a.values), (a, ), lambda g: (g * np.sign(a.values), ))


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.values)
    return record(out, (a, ), lambda g: (g * (1.0 - out**2), ))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.values)
    return record(out, (a, ), lambda g: (g * out * (1.0 - out), ))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def softplus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.values)
    return record(out, (a, ), lambda g: (g * _sigmoid(a.values), ))


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return record(np.maximum(a.values, 0.0), (a, ),
                  lambda g: (g * (a.values > 0), ))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: ArrayLike) -> Tensor:
    """ tanh approximation of GELU """

    a = as_tensor(a)
    x = a.values
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner), )

    return record(out, (a, ), backward)


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)), )

    return record(out, (a, ), backward)


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.values - a.values.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True), )

    return record(out, (a, ), backward)


def layer_norm(a: ArrayLike, eps: float = 1e-5) -> Tensor:
    """ Normalize the last axis to zero mean and unit variance (no affine) """

    a = as_tensor(a)
    mu = a.values.mean(axis=-1, keepdims=True)
    xc = a.values - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gxm = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gxm), )

    return record(xhat, (a, ), backward)


def sum(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(), )

    return record(out, (a, ), backward)


def mean(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis, ) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[_] for _ in axes]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / max(n, 1))


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    ts = [as_tensor(_) for _ in tensors]
    if not ts:
        raise ShapeError('concat: nothing to concatenate')
    ax = axis % ts[0].ndim
    for _t in ts[1:]:
        if _t.ndim != ts[0].ndim or \
                _t.shape[:ax] + _t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise ShapeError(
                f'concat: incompatible shapes {ts[0].shape} and {_t.shape}')
    sizes = [_t.shape[ax] for _t in ts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return [
            np.take(g, np.arange(bounds[_i], bounds[_i + 1]), axis=ax)
            for _i in range(len(ts))
        ]

    return record(np.concatenate([_t.values for _t in ts], axis=ax), ts,
                  backward)


def stack(tensors: Sequence[ArrayLike]) -> Tensor:
    """ Stack equally shaped tensors along a new leading axis """

    ts = [as_tensor(_) for _ in tensors]
    return concat([reshape(_t, (1, ) + _t.shape) for _t in ts], axis=0)


def slice(a: ArrayLike, key) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.values[key]

    def backward(g):
        ga = np.zeros_like(a.values)
        if _is_basic_index(key):
            ga[key] += g
        else:
            np.add.at(ga, key, g)
        return (ga, )

    return record(np.array(out), (a, ), backward)


def _is_basic_index(key) -> bool:
    parts = key if isinstance(key, tuple) else (key, )
    return all(
        isinstance(_, (int, np.integer, type(Ellipsis), type(None)))
        or isinstance(_, builtins.slice) for _ in parts)


def take_rows(table: ArrayLike, ids: Sequence[int]) -> Tensor:
    """ Gather rows of a 2-d table (an embedding lookup) """

    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f'take_rows: table must be 2-d, got {table.shape}')

    def backward(g):
        gt = np.zeros_like(table.values)
        np.add.at(gt, idx, g)
        return (gt, )

    return record(table.values[idx], (table, ), backward)


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.values.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(
            f'reshape: cannot view {a.shape} as {tuple(shape)}') from None
    return record(out, (a, ), lambda g: (g.reshape(a.shape), ))


def transpose(a: ArrayLike, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(np.transpose(a.values, axes), (a, ),
                  lambda g: (np.transpose(g, inverse), ))


def masked_fill(a: ArrayLike, mask: np.ndarray, value: float) -> Tensor:
    """ Replace the positions where <mask> is True by a constant """

    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return record(np.where(mask, value, a.values), (a, ),
                  lambda g: (np.where(mask, 0.0, g), ))


def wrap_angle(a: ArrayLike) -> Tensor:
    """ Wrap angles to (-pi, pi]; the 2*pi shift is a constant for gradients """

    a = as_tensor(a)
    shift = a.values - wrap_to_pi(a.values)
    return sub(a, Tensor(shift))


def bce_with_logits(z: ArrayLike, target: ArrayLike) -> Tensor:
    """ Elementwise binary cross-entropy of sigmoid(z) against target """

    z, t = as_tensor(z), as_tensor(target)
    if z.shape != t.shape:
        raise ShapeError(
            f'bce_with_logits: incompatible shapes {z.shape} and {t.shape}')
    x = z.values
    out = np.maximum(x, 0.0) - x * t.values + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        return g * (_sigmoid(x) - t.values), g * (-x)

    return record(out, (z, t), backward)


def cross_entropy(logits: ArrayLike, target: int) -> Tensor:
    """ -log softmax(logits)[target] for a 1-d logit vector """

    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise ShapeError(f'cross_entropy: expects 1-d logits, got {logits.shape}')
    return neg(slice(log_softmax(logits), int(target)))


def conv2d(x: ArrayLike, w: ArrayLike, padding: int = 0) -> Tensor:
    """ Stride-1 2-d convolution, x [C_in, H, W], w [C_out, C_in, k, k]

    Implemented with im2col so the reverse pass is one matmul plus a
    scatter-add back into the padded input.
    """

    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4 or x.shape[0] != w.shape[1]:
        raise ShapeError(f'conv2d: incompatible shapes {x.shape} and {w.shape}')
    c_in, h, wd = x.shape
    c_out, _, k, k2 = w.shape
    assert (k == k2)
    xp = np.pad(x.values, ((0, 0), (padding, padding), (padding, padding)))
    ho, wo = xp.shape[1] - k + 1, xp.shape[2] - k + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f'conv2d: kernel {w.shape} larger than input {x.shape}')
    # rows index (c, di, dj), columns index output pixels
    ci, di, dj = np.meshgrid(np.arange(c_in),
                             np.arange(k),
                             np.arange(k),
                             indexing='ij')
    oi, oj = np.meshgrid(np.arange(ho), np.arange(wo), indexing='ij')
    rows_c = ci.reshape(-1, 1)
    rows_i = di.reshape(-1, 1) + oi.reshape(1, -1)
    rows_j = dj.reshape(-1, 1) + oj.reshape(1, -1)
    cols = xp[rows_c, rows_i, rows_j]
    wmat = w.values.reshape(c_out, -1)
    out = (wmat @ cols).reshape(c_out, ho, wo)

    def backward(g):
        gm = g.reshape(c_out, -1)
        gw = (gm @ cols.T).reshape(w.shape)
        gcols = wmat.T @ gm
        gxp = np.zeros_like(xp)
        np.add.at(gxp, (np.broadcast_to(rows_c, rows_i.shape), rows_i,
                        rows_j), gcols)
        gx = gxp[:, padding:padding + h, padding:padding + wd]
        return gx, gw

    return record(out, (x, w), backward)


def l1(a: ArrayLike, b: ArrayLike) -> Tensor:
    return sum(abs(sub(a, b)))
