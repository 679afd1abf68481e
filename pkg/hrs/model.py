"""
The HRS network. A window is seen twice: as a rendered polyline image
(VFEM, a strided conv2d whose patches become tokens) and as numbers (NFEM,
a length-preserving conv1d plus a calendar embedding). FFM projects the
concatenated tokens onto `fusion_dim` tokens, MDM mixes across tokens and
then across features, and a linear head emits the horizon.

Forecasts are produced in the window's normalized scale and denormalized
with the per-window min/max carried by the sample. Each variate is
forecast independently with shared parameters.
"""
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from hrs.data import TIME_FIELDS, SeriesWindow, WindowBatch, decompose_timestamps
from hrs.errors import ConfigError, ShapeError
from hrs.render import ImageTensor, RenderConfig, render_series
from hrs.tensor import (
    Conv1dSpec,
    ConvSpec,
    Tensor,
    concat,
    conv1d,
    conv2d,
    layer_norm,
    linear,
    relu,
)

logger = logging.getLogger(__name__)

MODEL_KINDS = ("hrs", "linear", "oracle")


@dataclass(frozen=True)
class HrsConfig:
    lookback: int = 24
    horizon: int = 24
    embed_dim: int = 16
    fusion_dim: int = 64
    kernel: Tuple[int, int] = (8, 8)
    stride: Tuple[int, int] = (8, 8)
    conv1d_kernel: int = 3
    time_fields: int = len(TIME_FIELDS)
    token_hidden: Optional[int] = None
    dim_hidden: Optional[int] = None
    eps: float = 1e-5
    render: RenderConfig = field(default_factory=RenderConfig)
    use_vfem: bool = True
    use_nfem: bool = True
    use_ffm: bool = True
    use_mdm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        if isinstance(self.render, dict):
            object.__setattr__(self, "render", RenderConfig(**self.render))
        for name in ("lookback", "horizon", "embed_dim", "fusion_dim", "conv1d_kernel"):
            if getattr(self, name) < 1:
                raise ConfigError(
                    f"MODEL_{name.upper()} must be >= 1, got {getattr(self, name)}"
                )
        if self.time_fields != len(TIME_FIELDS):
            raise ConfigError(
                f"MODEL_TIME_FIELDS must be {len(TIME_FIELDS)}, got {self.time_fields}"
            )
        if not (self.use_vfem or self.use_nfem):
            raise ConfigError(
                "at least one of MODEL_USE_VFEM and MODEL_USE_NFEM must stay enabled"
            )
        if len(self.kernel) != 2 or len(self.stride) != 2:
            raise ConfigError("MODEL_KERNEL and MODEL_STRIDE are (height, width) pairs")
        try:
            self.patch_grid
        except ShapeError as e:
            raise ConfigError(
                f"MODEL_KERNEL does not fit the rendered image: {e}"
            ) from e

    @property
    def vfem_spec(self) -> ConvSpec:
        return ConvSpec(
            *self.kernel, *self.stride, in_channels=3, out_channels=self.embed_dim
        )

    @property
    def conv1d_spec(self) -> Conv1dSpec:
        return Conv1dSpec(kernel=self.conv1d_kernel, out_channels=self.embed_dim)

    @property
    def image_shape(self) -> Tuple[int, int]:
        return self.render.pixel_height, self.render.pixel_width(self.lookback)

    @property
    def patch_grid(self) -> Tuple[int, int]:
        return self.vfem_spec.output_extents(*self.image_shape)

    @property
    def patches(self) -> int:
        i_h, i_w = self.patch_grid
        return i_h * i_w

    @property
    def fused_tokens(self) -> int:
        """Tokens entering fusion: V image patches plus L time steps."""
        return self.patches + self.lookback

    @property
    def mixed_tokens(self) -> int:
        return self.fusion_dim if self.use_ffm else self.fused_tokens

    @property
    def token_hidden_width(self) -> int:
        return self.token_hidden or 2 * self.mixed_tokens

    @property
    def dim_hidden_width(self) -> int:
        return self.dim_hidden or 2 * self.embed_dim

    def ablated(self, variant: str) -> "HrsConfig":
        switches = {
            "full": {},
            "no_vfem": {"use_vfem": False},
            "no_nfem": {"use_nfem": False},
            "no_ffm": {"use_ffm": False},
            "no_mdm": {"use_mdm": False},
        }
        if variant not in switches:
            raise ConfigError(
                f"unknown ablation variant {variant!r}; choose from {sorted(switches)}"
            )
        return replace(self, **switches[variant])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "HrsConfig":
        values = dict(values)
        render = values.pop("render", {})
        return cls(render=RenderConfig(**render), **values)


class ModelParams:
    """Named parameter tensors of one model kind, in a fixed creation order."""

    def __init__(self, kind: str, tensors: Dict[str, Tensor]):
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
        self.kind = kind
        self.tensors = dict(tensors)
        for name, tensor in self.tensors.items():
            if not np.isfinite(tensor.data).all():
                raise ShapeError(f"parameter {name} holds non-finite values")

    @classmethod
    def init(
        cls, cfg: HrsConfig, rng: np.random.Generator, kind: str = "hrs"
    ) -> "ModelParams":
        shapes = parameter_shapes(cfg, kind)
        tensors = {}
        for name, shape in shapes.items():
            if name.endswith(".gain"):
                data = np.ones(shape)
            elif name.endswith(".shift"):
                data = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(_fan_in(name, shapes))
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor.parameter(data)
        params = cls(kind, tensors)
        logger.debug(f"Initialized {kind} model with {params.n_parameters} parameters")
        return params

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.tensors.values())

    def items(self):
        return self.tensors.items()

    @property
    def n_parameters(self) -> int:
        return int(sum(t.size for t in self))

    def zero_grad(self) -> None:
        for tensor in self:
            tensor.zero_grad()

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, array in arrays.items():
            if self.tensors[name].shape != array.shape:
                raise ShapeError(
                    f"{name}: stored shape {array.shape}, expected "
                    f"{self.tensors[name].shape}"
                )
            self.tensors[name].data = np.array(array, dtype=np.float64)


def _fan_in(name: str, shapes: Dict[str, tuple]) -> int:
    prefix, _, leaf = name.rpartition(".")
    weight = shapes[f"{prefix}.{leaf.replace('b', 'w', 1)}"]
    return int(np.prod(weight[1:]))


def parameter_shapes(cfg: HrsConfig, kind: str = "hrs") -> Dict[str, tuple]:
    L, T, D, K = cfg.lookback, cfg.horizon, cfg.embed_dim, cfg.conv1d_kernel
    if kind == "linear":
        return {"linear.w": (T, L), "linear.b": (T,)}
    if kind == "oracle":
        return {}

    shapes: Dict[str, tuple] = {}
    if cfg.use_vfem:
        k_h, k_w = cfg.kernel
        shapes["vfem.w"] = (D, 3, k_h, k_w)
        shapes["vfem.b"] = (D,)
    if cfg.use_nfem:
        shapes["nfem.conv.w"] = (D, 1, K)
        shapes["nfem.conv.b"] = (D,)
        shapes["nfem.time.w"] = (D, cfg.time_fields)
        shapes["nfem.time.b"] = (D,)
    if not cfg.use_vfem or not cfg.use_nfem:
        kept = L if cfg.use_nfem else cfg.patches
        shapes["widen.w"] = (cfg.fused_tokens, kept)
        shapes["widen.b"] = (cfg.fused_tokens,)
    if cfg.use_ffm:
        shapes["ffm.w"] = (cfg.fusion_dim, cfg.fused_tokens)
        shapes["ffm.b"] = (cfg.fusion_dim,)

    tokens = cfg.mixed_tokens
    hidden_t, hidden_d = cfg.token_hidden_width, cfg.dim_hidden_width
    if cfg.use_mdm:
        shapes["mdm.ln1.gain"] = (D,)
        shapes["mdm.ln1.shift"] = (D,)
        shapes["mdm.token.w1"] = (hidden_t, tokens)
        shapes["mdm.token.b1"] = (hidden_t,)
        shapes["mdm.token.w2"] = (tokens, hidden_t)
        shapes["mdm.token.b2"] = (tokens,)
        shapes["mdm.ln2.gain"] = (D,)
        shapes["mdm.ln2.shift"] = (D,)
        shapes["mdm.dim.w1"] = (hidden_d, D)
        shapes["mdm.dim.b1"] = (hidden_d,)
        shapes["mdm.dim.w2"] = (D, hidden_d)
        shapes["mdm.dim.b2"] = (D,)
    else:
        shapes["mlp.w1"] = (hidden_d, D)
        shapes["mlp.b1"] = (hidden_d,)
        shapes["mlp.w2"] = (D, hidden_d)
        shapes["mlp.b2"] = (D,)

    shapes["head.w"] = (T, tokens * D)
    shapes["head.b"] = (T,)
    return shapes


def _expect(tensor: Tensor, trailing: tuple, what: str) -> Tensor:
    if tensor.shape[-len(trailing) :] != trailing:
        raise ShapeError(
            f"{what} has shape {tensor.shape}, expected trailing {trailing}"
        )
    return tensor


def _token_map(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map along the token axis (second to last) of …×tokens×D."""
    return linear(x.swap_last(), weight, bias).swap_last()


def vfem(x_img, p: ModelParams, cfg: HrsConfig) -> Tensor:
    """Image → S_m (…×D×I_h×I_w) → F_v (…×V×D)."""
    data = x_img.data if isinstance(x_img, (ImageTensor, Tensor)) else np.asarray(x_img)
    if data.shape[-3:] != (3,) + cfg.image_shape:
        raise ShapeError(
            f"image has shape {data.shape}, expected trailing {(3,) + cfg.image_shape}"
        )
    s_m = conv2d(Tensor.constant(data), cfg.vfem_spec, p["vfem.w"], p["vfem.b"])
    lead = s_m.shape[:-3]
    return s_m.reshape(lead + (cfg.embed_dim, cfg.patches)).swap_last()


def nfem_features(x_data, time_features, p: ModelParams, cfg: HrsConfig) -> Tensor:
    x = Tensor.constant(x_data)
    _expect(x, (cfg.lookback,), "numeric input")
    f_vi = conv1d(x, cfg.conv1d_spec, p["nfem.conv.w"], p["nfem.conv.b"])
    f_ti = linear(Tensor.constant(time_features), p["nfem.time.w"], p["nfem.time.b"])
    return f_vi + f_ti


def nfem(x_data, x_date, p: ModelParams, cfg: HrsConfig) -> Tensor:
    """F_n = conv1d(x_data) + linear(calendar fields of x_date), …×L×D."""
    dates = np.asarray(x_date)
    features = decompose_timestamps(dates.reshape(-1))
    features = features.reshape(dates.shape + (cfg.time_fields,))
    return nfem_features(x_data, features, p, cfg)


def ffm(
    f_v: Optional[Tensor], f_n: Optional[Tensor], p: ModelParams, cfg: HrsConfig
) -> Tensor:
    """Concatenate along tokens ((V+L)×D) and project onto N_f tokens."""
    if f_v is not None and f_n is not None:
        if f_v.shape[-1] != f_n.shape[-1]:
            raise ShapeError(
                f"feature dims differ: F_v has {f_v.shape[-1]}, F_n has {f_n.shape[-1]}"
            )
        tokens = concat([f_v, f_n], axis=-2)
    else:
        tokens = _token_map(f_v if f_n is None else f_n, p["widen.w"], p["widen.b"])
    _expect(tokens, (cfg.fused_tokens, cfg.embed_dim), "fused tokens")
    if not cfg.use_ffm:
        return tokens
    return _token_map(tokens, p["ffm.w"], p["ffm.b"])


def mdm(f_f: Tensor, p: ModelParams, cfg: HrsConfig) -> Tensor:
    _expect(f_f, (cfg.mixed_tokens, cfg.embed_dim), "fused feature")
    if not cfg.use_mdm:
        hidden = relu(linear(f_f, p["mlp.w1"], p["mlp.b1"]))
        return linear(hidden, p["mlp.w2"], p["mlp.b2"])

    m_1 = layer_norm(f_f, p["mdm.ln1.gain"], p["mdm.ln1.shift"], cfg.eps)
    hidden = relu(_token_map(m_1, p["mdm.token.w1"], p["mdm.token.b1"]))
    m_tk = _token_map(hidden, p["mdm.token.w2"], p["mdm.token.b2"])
    m_2 = layer_norm(m_tk + f_f, p["mdm.ln2.gain"], p["mdm.ln2.shift"], cfg.eps)
    hidden = relu(linear(m_2, p["mdm.dim.w1"], p["mdm.dim.b1"]))
    return linear(hidden, p["mdm.dim.w2"], p["mdm.dim.b2"])


def head(m_out: Tensor, p: ModelParams, cfg: HrsConfig) -> Tensor:
    lead = m_out.shape[:-2]
    flat = m_out.reshape(lead + (cfg.mixed_tokens * cfg.embed_dim,))
    return linear(flat, p["head.w"], p["head.b"])


def forward_normalized(
    images, x_norm, time_features, p: ModelParams, cfg: HrsConfig
) -> Tensor:
    """Forecast in normalized scale; inputs may carry a leading batch axis."""
    f_v = vfem(images, p, cfg) if cfg.use_vfem else None
    f_n = nfem_features(x_norm, time_features, p, cfg) if cfg.use_nfem else None
    m_out = mdm(ffm(f_v, f_n, p, cfg), p, cfg)
    _expect(m_out, (cfg.mixed_tokens, cfg.embed_dim), "MDM output")
    return _expect(head(m_out, p, cfg), (cfg.horizon,), "forecast")


def linear_baseline(x_norm, p: ModelParams) -> Tensor:
    """One affine map from the normalized lookback to the normalized horizon."""
    return linear(Tensor.constant(x_norm), p["linear.w"], p["linear.b"])


def predict_tensor(p: ModelParams, cfg: HrsConfig, batch: WindowBatch) -> Tensor:
    """Differentiable raw-scale forecasts for every window of the batch, N×T."""
    if batch.lookback.shape[1] != cfg.lookback:
        raise ShapeError(
            f"batch lookback {batch.lookback.shape[1]} differs from MODEL_LOOKBACK "
            f"{cfg.lookback}"
        )
    if p.kind == "oracle":
        return Tensor(batch.horizon)
    if p.kind == "linear":
        y_norm = linear_baseline(batch.lookback_norm, p)
    else:
        y_norm = forward_normalized(
            batch.images(), batch.lookback_norm, batch.time_features, p, cfg
        )
    return y_norm * batch.scale[:, None] + batch.vmin[:, None]


def forecast_batch(
    p: ModelParams, cfg: HrsConfig, batch: WindowBatch, chunk: int = 256
) -> np.ndarray:
    parts = [
        predict_tensor(p, cfg, batch.take(np.arange(i, min(i + chunk, len(batch)))))
        for i in range(0, len(batch), chunk)
    ]
    return np.concatenate([part.data for part in parts], axis=0)


def hrs_forward(sample: SeriesWindow, cfg: HrsConfig, p: ModelParams) -> np.ndarray:
    """Raw-scale forecast of length T for one window."""
    if sample.lookback.shape[0] != cfg.lookback:
        raise ShapeError(
            f"sample lookback {sample.lookback.shape[0]} differs from MODEL_LOOKBACK "
            f"{cfg.lookback}"
        )
    x_norm = sample.normalize(sample.lookback)
    if p.kind == "oracle":
        return np.array(sample.horizon, dtype=np.float64)
    if p.kind == "linear":
        y_norm = linear_baseline(x_norm, p)
    else:
        image = render_series(sample.lookback, cfg.render)
        features = decompose_timestamps(sample.lookback_times)
        y_norm = forward_normalized(image.data, x_norm, features, p, cfg)
    return sample.denormalize(y_norm.data)
