import itertools
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from hrs.errors import GraphError, ShapeError

logger = logging.getLogger(__name__)

_node_ids = itertools.count()

_VISITING = 1
_DONE = 2

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out the axes numpy broadcasting added or stretched to reach `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """
    A differentiable primitive. `forward` receives raw arrays, `backward`
    receives the upstream gradient and returns one gradient (or None) per
    input tensor, in order.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs) -> "Tensor":
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(
            out_data,
            requires_grad=requires_grad,
            creator=func if requires_grad else None,
        )


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "creator", "node_id", "_released")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        if any(extent <= 0 for extent in self.data.shape):
            raise ShapeError(f"tensor extents must be positive, got {self.data.shape}")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.creator = creator
        self.node_id = next(_node_ids)
        self._released = False

    @staticmethod
    def constant(data: ArrayLike) -> "Tensor":
        return data if isinstance(data, Tensor) else Tensor(data)

    @staticmethod
    def parameter(data: ArrayLike) -> "Tensor":
        return Tensor(np.array(data, dtype=np.float64), requires_grad=True)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match "
                f"tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def _topological_order(self):
        order = []
        state = {id(self): _VISITING}
        stack = [(self, iter(self._parents()))]
        while stack:
            node, parents = stack[-1]
            for parent in parents:
                seen = state.get(id(parent))
                assert seen != _VISITING, "cycle in differentiation graph"
                if seen is None:
                    state[id(parent)] = _VISITING
                    stack.append((parent, iter(parent._parents())))
                    break
            else:
                stack.pop()
                state[id(node)] = _DONE
                order.append(node)
        return order

    def _parents(self):
        if self.creator is None:
            return ()
        return tuple(t for t in self.creator.tensors if t.requires_grad)

    def backward(self) -> None:
        """
        Reverse-mode pass from a scalar loss. Every tracked tensor in the
        graph receives its gradient; leaves accumulate into `.grad` so that
        reused subexpressions sum. The graph is released afterwards and a
        second call on the same loss is rejected.
        """
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._released:
            raise GraphError("backward already ran on this graph; rebuild it first")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tracked tensor")

        order = self._topological_order()
        self._accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node.creator is None:
                continue
            grads = node.creator.backward(node.grad)
            for parent, grad in zip(node.creator.tensors, grads):
                if grad is not None and parent.requires_grad:
                    parent._accumulate_grad(grad)

        for node in order:
            if node.creator is not None:
                node.creator.tensors = ()
                node.creator = None
        self._released = True

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar

    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, Tensor.constant(other))

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(Tensor.constant(other), self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self, Tensor.constant(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(Tensor.constant(other), self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, Tensor.constant(other))

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(Tensor.constant(other), self)

    def __truediv__(self, other: Union[float, np.ndarray]) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by constants")
        return Mul.apply(self, Tensor(1.0 / np.asarray(other, dtype=np.float64)))

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return MatMul.apply(self, Tensor.constant(other))

    def sum(self) -> "Tensor":
        return Sum.apply(self)

    def mean(self) -> "Tensor":
        return Sum.apply(self) / float(self.size)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def swap_last(self) -> "Tensor":
        return SwapLast.apply(self)


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            unbroadcast(grad * self.b, self.a.shape),
            unbroadcast(grad * self.a, self.b.shape),
        )


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class MatMul(Function):
    def forward(self, a, b):
        if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise ShapeError(
                f"matmul inner extent mismatch: {a.shape[-1]} vs {b.shape} (axis -2)"
            )
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        a, b = self.a, self.b
        grad_a = grad @ np.swapaxes(b, -1, -2)
        grad_b = np.swapaxes(a, -1, -2) @ grad
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)


class Sum(Function):
    def forward(self, a):
        self.shape = a.shape
        return np.asarray(a.sum())

    def backward(self, grad):
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class SwapLast(Function):
    def forward(self, a):
        if a.ndim < 2:
            raise ShapeError(
                f"swapping the last two axes needs ndim >= 2, got {a.ndim}"
            )
        return np.swapaxes(a, -1, -2)

    def backward(self, grad):
        return (np.swapaxes(grad, -1, -2),)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.extents = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.extents)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class ReLU(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, a):
        decay = np.exp(-np.abs(a))
        self.out = np.where(a >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def square(x: Tensor) -> Tensor:
    return x * x
