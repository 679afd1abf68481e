from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hrs.errors import ShapeError
from hrs.tensor.engine import Function, Tensor


@dataclass(frozen=True)
class ConvSpec:
    k_h: int
    k_w: int
    s_h: int
    s_w: int
    in_channels: int
    out_channels: int

    def __post_init__(self):
        for name in ("k_h", "k_w", "s_h", "s_w", "in_channels", "out_channels"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ShapeError(
                    f"ConvSpec.{name} must be a positive integer, got {value!r}"
                )

    def output_extents(self, height: int, width: int):
        if self.k_h > height:
            raise ShapeError(f"kernel height {self.k_h} exceeds input height {height}")
        if self.k_w > width:
            raise ShapeError(f"kernel width {self.k_w} exceeds input width {width}")
        return (height - self.k_h) // self.s_h + 1, (width - self.k_w) // self.s_w + 1


@dataclass(frozen=True)
class Conv1dSpec:
    kernel: int
    out_channels: int
    in_channels: int = 1

    def __post_init__(self):
        for name in ("kernel", "out_channels", "in_channels"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ShapeError(
                    f"Conv1dSpec.{name} must be a positive integer, got {value!r}"
                )
        if self.in_channels != 1:
            raise ShapeError(
                "conv1d embeds one variate at a time; in_channels must be 1"
            )

    @property
    def padding(self):
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left


def im2col(x: np.ndarray, spec: ConvSpec, out_h: int, out_w: int) -> np.ndarray:
    n, c = x.shape[:2]
    cols = np.empty((n, c, spec.k_h, spec.k_w, out_h, out_w))
    for i in range(spec.k_h):
        i_max = i + spec.s_h * out_h
        for j in range(spec.k_w):
            j_max = j + spec.s_w * out_w
            cols[:, :, i, j] = x[:, :, i : i_max : spec.s_h, j : j_max : spec.s_w]
    # (N, C, kh, kw, oh, ow) -> (N*oh*ow, C*kh*kw)
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1)


def col2im(
    cols: np.ndarray, shape, spec: ConvSpec, out_h: int, out_w: int
) -> np.ndarray:
    n, c, h, w = shape
    cols = cols.reshape(n, out_h, out_w, c, spec.k_h, spec.k_w)
    cols = cols.transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h, w))
    for i in range(spec.k_h):
        i_max = i + spec.s_h * out_h
        for j in range(spec.k_w):
            j_max = j + spec.s_w * out_w
            img[:, :, i : i_max : spec.s_h, j : j_max : spec.s_w] += cols[:, :, i, j]
    return img


class Conv2d(Function):
    def forward(self, x, weight, bias, spec: ConvSpec):
        self.batched = x.ndim == 4
        if not self.batched:
            x = x[None]
        if x.ndim != 4:
            raise ShapeError(
                f"conv2d input must be C×H×W or N×C×H×W, got {x.shape}"
            )
        n, c, h, w = x.shape
        if c != spec.in_channels:
            raise ShapeError(
                f"conv2d channel mismatch: input has {c}, "
                f"spec expects {spec.in_channels}"
            )
        expected = (spec.out_channels, spec.in_channels, spec.k_h, spec.k_w)
        if weight.shape != expected:
            raise ShapeError(f"conv2d weight shape {weight.shape}, expected {expected}")
        if bias.shape != (spec.out_channels,):
            raise ShapeError(
                f"conv2d bias shape {bias.shape}, expected ({spec.out_channels},)"
            )
        out_h, out_w = spec.output_extents(h, w)

        self.spec, self.x_shape, self.out_hw = spec, x.shape, (out_h, out_w)
        self.cols = im2col(x, spec, out_h, out_w)
        self.w_mat = weight.reshape(spec.out_channels, -1)
        out = self.cols @ self.w_mat.T + bias
        out = out.reshape(n, out_h, out_w, spec.out_channels).transpose(0, 3, 1, 2)
        return out if self.batched else out[0]

    def backward(self, grad):
        if not self.batched:
            grad = grad[None]
        spec = self.spec
        grad_mat = grad.transpose(0, 2, 3, 1).reshape(-1, spec.out_channels)
        grad_w = (grad_mat.T @ self.cols).reshape(
            spec.out_channels, spec.in_channels, spec.k_h, spec.k_w
        )
        grad_b = grad_mat.sum(axis=0)
        grad_x = col2im(grad_mat @ self.w_mat, self.x_shape, spec, *self.out_hw)
        return (grad_x if self.batched else grad_x[0]), grad_w, grad_b


class Conv1d(Function):
    def forward(self, x, weight, bias, spec: Conv1dSpec):
        self.batched = x.ndim == 2
        if not self.batched:
            x = x[None]
        if x.ndim != 2:
            raise ShapeError(f"conv1d input must be L or N×L, got {x.shape}")
        expected = (spec.out_channels, spec.in_channels, spec.kernel)
        if weight.shape != expected:
            raise ShapeError(f"conv1d weight shape {weight.shape}, expected {expected}")
        if bias.shape != (spec.out_channels,):
            raise ShapeError(
                f"conv1d bias shape {bias.shape}, expected ({spec.out_channels},)"
            )
        left, right = spec.padding
        length = x.shape[1]
        if spec.kernel > length + left + right:
            padded = length + left + right
            raise ShapeError(
                f"conv1d kernel {spec.kernel} exceeds padded length {padded}"
            )

        self.spec, self.length = spec, length
        padded = np.pad(x, ((0, 0), (left, right)))
        self.windows = sliding_window_view(padded, spec.kernel, axis=1)
        self.w_mat = weight.reshape(spec.out_channels, spec.kernel)
        out = self.windows @ self.w_mat.T + bias
        return out if self.batched else out[0]

    def backward(self, grad):
        if not self.batched:
            grad = grad[None]
        spec = self.spec
        grad_w = np.einsum("nlk,nld->dk", self.windows, grad)
        grad_w = grad_w.reshape(spec.out_channels, 1, spec.kernel)
        grad_b = grad.sum(axis=(0, 1))
        grad_windows = grad @ self.w_mat
        left, _ = spec.padding
        grad_padded = np.zeros((grad.shape[0], self.length + spec.kernel - 1))
        for k in range(spec.kernel):
            grad_padded[:, k : k + self.length] += grad_windows[:, :, k]
        grad_x = grad_padded[:, left : left + self.length]
        return (grad_x if self.batched else grad_x[0]), grad_w, grad_b


class Linear(Function):
    def forward(self, x, weight, bias=None):
        if weight.ndim != 2:
            raise ShapeError(f"linear weight must be F_out×F_in, got {weight.shape}")
        if x.shape[-1] != weight.shape[1]:
            raise ShapeError(
                f"linear trailing extent {x.shape[-1]} "
                f"does not match F_in {weight.shape[1]}"
            )
        if bias is not None and bias.shape != (weight.shape[0],):
            raise ShapeError(
                f"linear bias shape {bias.shape}, expected ({weight.shape[0]},)"
            )
        self.x, self.weight = x, weight
        out = x @ weight.T
        return out if bias is None else out + bias

    def backward(self, grad):
        f_out, f_in = self.weight.shape
        flat_grad = grad.reshape(-1, f_out)
        grad_x = grad @ self.weight
        grad_w = flat_grad.T @ self.x.reshape(-1, f_in)
        grads = (grad_x, grad_w)
        if len(self.tensors) == 3:
            grads += (flat_grad.sum(axis=0),)
        return grads


class LayerNorm(Function):
    def forward(self, x, gain, shift, eps):
        width = x.shape[-1]
        if gain.shape != (width,) or shift.shape != (width,):
            raise ShapeError(
                f"layer_norm affine shapes {gain.shape}/{shift.shape}, "
                f"expected ({width},)"
            )
        if eps <= 0:
            raise ShapeError(f"layer_norm eps must be positive, got {eps}")
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = centered * self.inv_std
        self.gain = gain
        return self.x_hat * gain + shift

    def backward(self, grad):
        width = self.x_hat.shape[-1]
        grad_x_hat = grad * self.gain
        grad_x = (
            self.inv_std
            / width
            * (
                width * grad_x_hat
                - grad_x_hat.sum(axis=-1, keepdims=True)
                - self.x_hat * (grad_x_hat * self.x_hat).sum(axis=-1, keepdims=True)
            )
        )
        grad_gain = (grad * self.x_hat).reshape(-1, width).sum(axis=0)
        grad_shift = grad.reshape(-1, width).sum(axis=0)
        return grad_x, grad_gain, grad_shift


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Strided valid convolution of a C_in×H×W (or batched N×C_in×H×W) input.
    Output extents are floor((H-k_h)/s_h)+1 by floor((W-k_w)/s_w)+1.
    """
    return Conv2d.apply(x, weight, bias, spec=spec)


def conv1d(x: Tensor, spec: Conv1dSpec, weight: Tensor, bias: Tensor) -> Tensor:
    """Length-preserving convolution embedding each position into out_channels."""
    return Conv1d.apply(x, weight, bias, spec=spec)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    if bias is None:
        return Linear.apply(x, weight)
    return Linear.apply(x, weight, bias)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gain, shift, eps=eps)
