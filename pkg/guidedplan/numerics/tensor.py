"""
Dense tensors with reverse-mode differentiation

A Tensor wraps a row-major numpy array. While a Tape is active on the
current thread, every op whose inputs require gradients records one node
(output, parents, backward closure) onto that tape. Nodes are appended in
evaluation order, so walking them backwards is a valid topological order:

    with Tape() as tape:
        loss = ops.sum(ops.mul(x, x))
    tape.backward(loss)     # x.grad == 2 * x.values

Tapes are thread-local, several independent tapes may run in parallel on
different threads (one per scenario worker).
"""

from __future__ import annotations
import threading
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from guidedplan.errors import ShapeError, TapeError

ArrayLike = Union['Tensor', np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DTYPE = np.float64
_local = threading.local()


def set_default_dtype(dtype) -> None:
    """ float64 is the default; float32 is accepted for benchmark runs """

    global _DTYPE
    dtype = np.dtype(dtype)
    assert (dtype in (np.dtype(np.float64), np.dtype(np.float32)))
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


def _tape_stack() -> List['Tape']:
    stack = getattr(_local, 'stack', None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional['Tape']:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """ Dense n-dimensional value with an optional gradient buffer

    Attributes:
        values (np.ndarray): the dense values, row-major
        grad (Optional[np.ndarray]): accumulated gradient, same shape as values
        requires_grad (bool): leaves with requires_grad receive gradients
        name (Optional[str]): parameter name, if the tensor is a parameter
        node_id (Optional[int]): position on the recording tape
    """

    __slots__ = ('values', 'grad', 'requires_grad', 'name', 'node_id',
                 'tape')

    def __init__(self,
                 values: ArrayLike,
                 requires_grad: bool = False,
                 name: Optional[str] = None) -> None:
        if isinstance(values, Tensor):
            values = values.values
        self.values: np.ndarray = np.array(values, dtype=_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.node_id: Optional[int] = None
        self.tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f'item() needs a single value, got {self.shape}')
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> 'Tensor':
        return Tensor(self.values.copy())

    def __repr__(self) -> str:
        tag = f' name={self.name}' if self.name else ''
        return f'Tensor(shape={self.shape}{tag})'

    # operator sugar, the ops module does the work
    def __add__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.add(self, o)

    def __radd__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.add(o, self)

    def __sub__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.sub(self, o)

    def __rsub__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.sub(o, self)

    def __mul__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.mul(self, o)

    def __rmul__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.mul(o, self)

    def __truediv__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.div(self, o)

    def __neg__(self) -> 'Tensor':
        from . import ops
        return ops.neg(self)

    def __matmul__(self, o: ArrayLike) -> 'Tensor':
        from . import ops
        return ops.matmul(self, o)

    def __getitem__(self, key) -> 'Tensor':
        from . import ops
        return ops.slice(self, key)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(values: np.ndarray, parents: Sequence[Tensor],
           backward: BackwardFn) -> Tensor:
    """ Wrap the result of an op and put it on the active tape

    Nothing is recorded when no tape is active or when none of the parents
    requires a gradient.
    """

    out = Tensor(values)
    tape = active_tape()
    if tape is not None and any(_p.requires_grad for _p in parents):
        out.requires_grad = True
        tape.append(out, parents, backward)
    return out


class Tape:
    """ Records ops for one reverse pass

    Use as a context manager; nested tapes shadow the outer one until they
    exit.
    """

    def __init__(self) -> None:
        self._nodes: List[Tuple[Tensor, Tuple[Tensor, ...], BackwardFn]] = []

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        assert (stack and stack[-1] is self)
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def append(self, out: Tensor, parents: Sequence[Tensor],
               backward: BackwardFn) -> None:
        out.node_id = len(self._nodes)
        out.tape = self
        self._nodes.append((out, tuple(parents), backward))

    def backward(self, loss: Tensor) -> None:
        """ Accumulate d(loss)/d(leaf) into every leaf's grad, then clear

        Raises:
            ShapeError: loss is not a scalar
            TapeError: loss was not recorded on this tape
        """

        if loss.size != 1:
            raise ShapeError(f'backward needs a scalar loss, got {loss.shape}')
        if loss.tape is not self or loss.node_id is None:
            raise TapeError('loss is not on this tape')

        grads: Dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.values)
        }
        for out, parents, fn in reversed(self._nodes[:loss.node_id + 1]):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for _p, _g in zip(parents, fn(g)):
                if _g is None or not _p.requires_grad:
                    continue
                if _p.tape is self:
                    prev = grads.get(id(_p))
                    grads[id(_p)] = _g if prev is None else prev + _g
                else:
                    _g = np.asarray(_g, dtype=_p.values.dtype)
                    _p.grad = _g.copy() if _p.grad is None else _p.grad + _g
        self.clear()

    def clear(self) -> None:
        for out, _, _ in self._nodes:
            out.node_id = None
            out.tape = None
        self._nodes = []


def backward(loss: Tensor) -> None:
    """ Reverse pass on the tape that recorded <loss> """

    if loss.size != 1:
        raise ShapeError(f'backward needs a scalar loss, got {loss.shape}')
    if loss.tape is None:
        raise TapeError('loss was not recorded on any tape')
    loss.tape.backward(loss)
