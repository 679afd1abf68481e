from typing import Callable, Sequence

import numpy as np

from hrs.tensor.engine import Tensor


def numerical_gradient(
    fn: Callable[[], Tensor], target: Tensor, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of the scalar `fn()` with respect to `target.data`."""
    grad = np.zeros_like(target.data)
    for index in np.ndindex(target.data.shape):
        original = target.data[index]
        target.data[index] = original + step
        upper = fn().item()
        target.data[index] = original - step
        lower = fn().item()
        target.data[index] = original
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
) -> bool:
    """
    Compare reverse-mode gradients of `fn()` against central differences for
    every tensor in `inputs`. `fn` must rebuild the graph on every call.
    """
    for tensor in inputs:
        tensor.zero_grad()
    fn().backward()
    analytic = [
        np.zeros_like(t.data) if t.grad is None else np.array(t.grad) for t in inputs
    ]
    for tensor, grad in zip(inputs, analytic):
        numeric = numerical_gradient(fn, tensor, step)
        if not np.allclose(grad, numeric, rtol=rtol, atol=atol):
            return False
    return True
