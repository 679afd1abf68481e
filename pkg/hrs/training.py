"""
Mini-batch training of HRS and the linear baseline with an Adam optimizer,
early stopping on validation loss, and evaluation with the exact SAL.
"""
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from hrs.data import Series, WindowBatch, make_window
from hrs.errors import ConfigError, DataError, DivergenceError
from hrs.loss import SalParams, mse_loss, sal_surrogate
from hrs.metrics import EvalReport, evaluate_forecasts
from hrs.model import HrsConfig, ModelParams, forecast_batch, predict_tensor
from hrs.render import RenderCache
from hrs.tensor import Tensor

logger = logging.getLogger(__name__)

LOSS_KINDS = ("sal", "mse")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "sal"
    sal: SalParams = field(default_factory=SalParams)
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tau_scale: float = 0.05
    uo_gate_scale: float = 5.0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigError(
                f"TRAIN_LOSS must be one of {LOSS_KINDS}, got {self.loss!r}"
            )
        if not self.learning_rate > 0:
            raise ConfigError(
                f"TRAIN_LEARNING_RATE must be > 0, got {self.learning_rate}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"TRAIN_BATCH_SIZE must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("TRAIN_MAX_EPOCHS and TRAIN_PATIENCE must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("TRAIN_BETA1 and TRAIN_BETA2 must lie in [0, 1)")
        if not self.tau_scale > 0:
            raise ConfigError(f"TRAIN_TAU_SCALE must be > 0, got {self.tau_scale}")
        if not self.uo_gate_scale > 0:
            raise ConfigError(
                f"TRAIN_UO_GATE_SCALE must be > 0, got {self.uo_gate_scale}"
            )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    is_best: bool


@dataclass
class TrainResult:
    params: ModelParams
    history: List[EpochRecord]
    sal: SalParams

    def history_records(self, **labels) -> List[dict]:
        return [{**labels, **asdict(r)} for r in self.history]


class Adam:
    def __init__(
        self, params: ModelParams, lr: float, betas: Tuple[float, float], eps: float
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, tensor in self.params.items():
            if tensor.grad is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * tensor.grad
            self.v[name] = (
                self.beta2 * self.v[name] + (1.0 - self.beta2) * tensor.grad**2
            )
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            tensor.data = tensor.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def resolve_sal(train_cfg: TrainConfig, targets: np.ndarray) -> SalParams:
    """Fill in tau as tau_scale times the standard deviation of the training targets."""
    if train_cfg.sal.tau is not None:
        return train_cfg.sal
    spread = float(np.std(targets))
    return train_cfg.sal.with_tau(train_cfg.tau_scale * (spread if spread > 0 else 1.0))


def uo_sal(train_cfg: TrainConfig, ratio: float, targets: np.ndarray) -> SalParams:
    """
    SAL of one U/O sweep point. The penalty gate is `uo_gate_scale` target
    standard deviations wide, so within it the flat penalty adds P / (4 tau)
    per unit of underprediction instead of a step at zero error.
    """
    sweep = replace(
        train_cfg,
        sal=SalParams.from_uo_ratio(ratio),
        tau_scale=train_cfg.uo_gate_scale,
    )
    return resolve_sal(sweep, targets)


def make_objective(
    train_cfg: TrainConfig, sp: SalParams
) -> Callable[[np.ndarray, Tensor], Tensor]:
    if train_cfg.loss == "mse":
        return mse_loss
    return lambda y, y_hat: sal_surrogate(y, y_hat, sp)


def train(
    kind: str,
    model_cfg: HrsConfig,
    train_cfg: TrainConfig,
    train_batch: WindowBatch,
    val_batch: WindowBatch,
    params: Optional[ModelParams] = None,
) -> TrainResult:
    if len(train_batch) == 0 or len(val_batch) == 0:
        raise DataError("training needs non-empty train and validation partitions")
    rng = np.random.default_rng(train_cfg.seed)
    params = params if params is not None else ModelParams.init(model_cfg, rng, kind)
    sp = resolve_sal(train_cfg, train_batch.horizon)
    if kind == "oracle":
        return TrainResult(params, [], sp)

    objective = make_objective(train_cfg, sp)
    betas = (train_cfg.beta1, train_cfg.beta2)
    optimizer = Adam(params, train_cfg.learning_rate, betas, train_cfg.adam_eps)
    logger.info(
        f"Training {kind} ({params.n_parameters} parameters) "
        f"with {train_cfg.loss} loss on {len(train_batch)} windows, "
        f"validating on {len(val_batch)}"
    )

    history: List[EpochRecord] = []
    best_loss, best_arrays, stale = np.inf, params.arrays(), 0
    n = len(train_batch)
    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_cfg.batch_size):
            batch = train_batch.take(order[start : start + train_cfg.batch_size])
            params.zero_grad()
            loss = objective(batch.horizon, predict_tensor(params, model_cfg, batch))
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite {train_cfg.loss} loss at epoch {epoch}, "
                    f"batch offset {start}"
                )
            loss.backward()
            optimizer.step()
            total += value * len(batch)

        val_forecast = Tensor(forecast_batch(params, model_cfg, val_batch))
        val_loss = objective(val_batch.horizon, val_forecast).item()
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        is_best = val_loss < best_loss
        if is_best:
            best_loss, best_arrays, stale = val_loss, params.arrays(), 0
        else:
            stale += 1
        history.append(EpochRecord(epoch, total / n, val_loss, is_best))
        marker = " *" if is_best else ""
        logger.info(f"Epoch {epoch}: train {total / n:.6g}, val {val_loss:.6g}{marker}")
        if stale >= train_cfg.patience:
            logger.info(f"Early stop after {epoch} epochs; best val {best_loss:.6g}")
            break

    params.load_arrays(best_arrays)
    return TrainResult(params, history, sp)


def evaluate(
    params: ModelParams, model_cfg: HrsConfig, batch: WindowBatch, sp: SalParams
) -> EvalReport:
    if len(batch) == 0:
        raise DataError("evaluation needs a non-empty partition")
    forecasts = forecast_batch(params, model_cfg, batch)
    return evaluate_forecasts(batch.horizon, forecasts, sp)


def forecast_records(
    params: ModelParams, model_cfg: HrsConfig, batch: WindowBatch, **labels
) -> List[dict]:
    """One record per forecast point: window, step, timestamp, actual and forecast."""
    y_hat = forecast_batch(params, model_cfg, batch)
    records = []
    for i in range(len(batch)):
        source = batch.sources[i] if batch.sources else ""
        for step in range(batch.horizon.shape[1]):
            records.append(
                {
                    **labels,
                    "window": i,
                    "step": step,
                    "source": source,
                    "timestamp": int(batch.horizon_times[i, step]),
                    "actual": float(batch.horizon[i, step]),
                    "forecast": float(y_hat[i, step]),
                }
            )
    return records


def forecast_series(
    params: ModelParams,
    model_cfg: HrsConfig,
    series: Series,
    start: int,
    stop: int,
    cache: Optional[RenderCache] = None,
) -> np.ndarray:
    """
    Forecasts for series points [start, stop), produced by consecutive
    non-overlapping horizons, each conditioned on the L actual points before it.
    """
    L, T = model_cfg.lookback, model_cfg.horizon
    if start < L or stop > len(series) or stop <= start:
        raise DataError(
            f"cannot forecast [{start}, {stop}) of a length-{len(series)} series with "
            f"lookback {L}"
        )
    origins = list(range(start, stop, T))
    padded = series
    if origins[-1] + T > len(series):
        tail = origins[-1] + T - len(series)
        values = np.concatenate([series.values, np.repeat(series.values[-1], tail)])
        extension = series.times[-1] + series.interval * np.arange(1, tail + 1)
        times = np.concatenate([series.times, extension])
        padded = Series(values, times, series.name)
    windows = [make_window(padded, origin - L, L, T) for origin in origins]
    batch = WindowBatch.from_windows(windows, model_cfg.render, cache)
    return forecast_batch(params, model_cfg, batch).reshape(-1)[: stop - start]


def sal_vs_mse(
    kind: str,
    model_cfg: HrsConfig,
    train_cfg: TrainConfig,
    train_batch: WindowBatch,
    val_batch: WindowBatch,
) -> Dict[str, TrainResult]:
    """Train the same model twice from the same seed, once per objective."""
    results = {}
    for loss in LOSS_KINDS:
        loss_cfg = replace(train_cfg, loss=loss)
        results[loss] = train(kind, model_cfg, loss_cfg, train_batch, val_batch)
    return results
