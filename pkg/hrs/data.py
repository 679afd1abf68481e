"""
Series ingestion, windowing, chronological splits, calendar features and
the seeded bursty-load generator standing in for proprietary traffic data.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hrs.errors import ConfigError, DataError
from hrs.render import RenderCache, RenderConfig, colorize

logger = logging.getLogger(__name__)

TIME_FIELDS = ("month", "day", "weekday", "hour", "minute")
# (low, high) code of each calendar field, scaled affinely onto [-0.5, 0.5]
_FIELD_RANGES = ((1, 12), (1, 31), (0, 6), (0, 23), (0, 59))
SUPPORTED_RANGE = (pd.Timestamp("1900-01-01"), pd.Timestamp("2200-01-01"))


@dataclass(frozen=True)
class Series:
    """A univariate series on integer epoch-second timestamps."""

    values: np.ndarray
    times: np.ndarray
    name: str = "value"
    dropped_rows: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.int64)
        if values.shape != times.shape or values.ndim != 1:
            raise DataError(
                f"values {values.shape} and times {times.shape} "
                "must be equal-length vectors"
            )
        if times.size > 1 and not (np.diff(times) > 0).all():
            raise DataError(
                f"timestamps of series {self.name!r} are not strictly increasing"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    def __len__(self):
        return self.values.shape[0]

    @property
    def interval(self) -> int:
        return int(np.median(np.diff(self.times))) if len(self) > 1 else 0


@dataclass(frozen=True)
class SeriesWindow:
    lookback: np.ndarray
    lookback_times: np.ndarray
    horizon: np.ndarray
    horizon_times: np.ndarray
    vmin: float
    vmax: float
    source: str = "value"

    @property
    def scale(self) -> float:
        diff = self.vmax - self.vmin
        return diff if diff > 0 else 1.0

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.vmin) / self.scale

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.scale + self.vmin


def make_window(
    series: Series, start: int, lookback: int, horizon: int
) -> SeriesWindow:
    steps = np.unique(np.diff(series.times[start : start + lookback + horizon]))
    if steps.size > 1:
        raise DataError(
            f"window at {start} of {series.name!r} spans a time gap: steps "
            f"{steps.tolist()} s"
        )
    past = series.values[start : start + lookback]
    return SeriesWindow(
        lookback=past,
        lookback_times=series.times[start : start + lookback],
        horizon=series.values[start + lookback : start + lookback + horizon],
        horizon_times=series.times[start + lookback : start + lookback + horizon],
        vmin=float(past.min()),
        vmax=float(past.max()),
        source=series.name,
    )


def window_dataset(
    series: Series, lookback: int, horizon: int, stride: int = 1
) -> List[SeriesWindow]:
    if lookback < 1 or horizon < 1 or stride < 1:
        raise DataError(
            f"lookback, horizon and stride must be positive, got {lookback}, "
            f"{horizon}, {stride}"
        )
    n = len(series)
    if n < lookback + horizon:
        raise DataError(
            f"series of length {n} is shorter than lookback+horizon = "
            f"{lookback + horizon}"
        )
    span = lookback + horizon
    # irregular[i] counts the steps before i that differ from the series interval
    irregular = np.concatenate(
        [[0], np.cumsum(np.diff(series.times) != series.interval)]
    )
    starts = [
        s
        for s in range(0, n - span + 1, stride)
        if irregular[s + span - 1] == irregular[s]
    ]
    skipped = (n - span) // stride + 1 - len(starts)
    if skipped:
        logger.warning(f"{series.name}: skipped {skipped} windows spanning time gaps")
    if not starts:
        raise DataError(
            f"series {series.name!r} has no gap-free stretch of {span} points"
        )
    return [make_window(series, s, lookback, horizon) for s in starts]


def split(
    windows: Sequence[SeriesWindow], ratios: Sequence[float] = (0.7, 0.1, 0.2)
) -> Tuple[List[SeriesWindow], List[SeriesWindow], List[SeriesWindow]]:
    """
    Contiguous chronological train/val/test partitions. Windows of an earlier
    partition whose horizon reaches the first timestamp of the next one are
    dropped, so no timestamp leaks across a boundary.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(
            "split ratios must be three positive numbers summing to 1, got "
            f"{tuple(ratios)}"
        )
    n = len(windows)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    parts = [
        list(windows[:n_train]),
        list(windows[n_train : n_train + n_val]),
        list(windows[n_train + n_val :]),
    ]

    for i in range(2):
        if parts[i + 1]:
            boundary = parts[i + 1][0].lookback_times[0]
            parts[i] = [w for w in parts[i] if w.horizon_times[-1] < boundary]

    for name, part in zip(("train", "validation", "test"), parts):
        if not part:
            raise DataError(
                f"{name} partition is empty ({n} windows, ratios {tuple(ratios)})"
            )
    return parts[0], parts[1], parts[2]


def _to_timestamps(ts) -> pd.DatetimeIndex:
    values = np.atleast_1d(np.asarray(ts))
    if np.issubdtype(values.dtype, np.number):
        index = pd.to_datetime(values, unit="s")
    else:
        index = pd.DatetimeIndex(pd.to_datetime(values))
    if index.tz is not None:
        index = index.tz_convert("UTC").tz_localize(None)
    return index


def decompose_timestamps(ts) -> np.ndarray:
    """Calendar fields of each timestamp, each scaled to [-0.5, 0.5]; shape (n, 5)."""
    try:
        index = _to_timestamps(ts)
    except (ValueError, OverflowError, pd.errors.OutOfBoundsDatetime) as e:
        raise DataError(f"timestamp outside the supported calendar range: {e}") from e
    low, high = SUPPORTED_RANGE
    if index.isna().any() or (index < low).any() or (index >= high).any():
        raise DataError(f"timestamps must lie in [{low.date()}, {high.date()})")
    raw = np.stack(
        [
            np.asarray(f)
            for f in (index.month, index.day, index.weekday, index.hour, index.minute)
        ],
        axis=-1,
    )
    lows = np.array([r[0] for r in _FIELD_RANGES], dtype=np.float64)
    spans = np.array([r[1] - r[0] for r in _FIELD_RANGES], dtype=np.float64)
    return (raw - lows) / spans - 0.5


def decompose_timestamp(ts) -> np.ndarray:
    if isinstance(ts, (int, np.integer)):
        return decompose_timestamps(np.array([ts], dtype=np.int64))[0]
    return decompose_timestamps([ts])[0]


def to_epoch_seconds(index: pd.DatetimeIndex) -> np.ndarray:
    return (index - pd.Timestamp("1970-01-01")) // pd.Timedelta(seconds=1)


@dataclass(frozen=True)
class SynthConfig:
    length: int = 2016
    interval: int = 3600
    start: str = "2023-07-01"
    base: float = 100.0
    daily_amplitude: float = 40.0
    weekly_amplitude: float = 15.0
    burst_rate: float = 1.5
    burst_scale: float = 60.0
    burst_width: int = 3
    noise_std: float = 5.0
    seed: int = 42

    def __post_init__(self):
        for name in (
            "base",
            "daily_amplitude",
            "weekly_amplitude",
            "burst_rate",
            "burst_scale",
            "noise_std",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(
                    f"SYNTH_{name.upper()} must be >= 0, got {getattr(self, name)}"
                )
        if self.length < 2 or self.interval < 1 or self.burst_width < 0:
            raise ConfigError(
                "SYNTH_LENGTH >= 2, SYNTH_INTERVAL >= 1 "
                "and SYNTH_BURST_WIDTH >= 0 are required"
            )


def synth_generate(cfg: SynthConfig, name: str = "value") -> Series:
    """
    Base level plus daily and weekly sinusoids, Poisson-arriving triangular
    bursts with exponential magnitudes, and Gaussian noise, clamped at 0.
    """
    rng = np.random.default_rng(cfg.seed)
    steps = np.arange(cfg.length)
    hours = steps * cfg.interval / 3600.0
    values = (
        cfg.base
        + cfg.daily_amplitude * np.sin(2 * np.pi * hours / 24.0)
        + cfg.weekly_amplitude * np.sin(2 * np.pi * hours / 168.0)
    )

    per_step = cfg.burst_rate * cfg.interval / 86400.0
    arrivals = rng.poisson(per_step, size=cfg.length)
    bursts = np.zeros(cfg.length)
    width = cfg.burst_width
    ramp = 1.0 - np.abs(np.arange(-width, width + 1)) / (width + 1)
    for t in np.flatnonzero(arrivals):
        magnitude = rng.exponential(cfg.burst_scale, size=arrivals[t]).sum()
        lo, hi = max(t - width, 0), min(t + width + 1, cfg.length)
        bursts[lo:hi] += magnitude * ramp[lo - t + width : hi - t + width]
    values = values + bursts

    if cfg.noise_std > 0:
        values = values + rng.normal(0.0, cfg.noise_std, size=cfg.length)
    values = np.maximum(values, 0.0)

    start = int(to_epoch_seconds(pd.DatetimeIndex([pd.Timestamp(cfg.start)]))[0])
    return Series(values, start + steps * cfg.interval, name)


def _parse_times(column: pd.Series) -> pd.Series:
    """Epoch seconds from numeric epochs or ISO-8601 strings; bad rows become NaN."""
    numeric = pd.to_numeric(column, errors="coerce")
    if numeric.notna().sum() * 2 >= len(column):
        return numeric.where(numeric == numeric.round()).astype("float64")
    parsed = pd.to_datetime(column, errors="coerce")
    if getattr(parsed.dt, "tz", None) is not None:
        parsed = parsed.dt.tz_convert("UTC").dt.tz_localize(None)
    seconds = (parsed - pd.Timestamp("1970-01-01")) // pd.Timedelta(seconds=1)
    return seconds.astype("float64")


def load_csv(
    path, value_column: str = "value", timestamp_column: str = "timestamp"
) -> Series:
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path} is empty") from e
    if df.empty:
        raise DataError(f"{path} has no data rows")
    for column in (value_column, timestamp_column):
        if column not in df.columns:
            raise DataError(
                f"{path} has no column {column!r}; found {list(df.columns)}"
            )

    values = pd.to_numeric(df[value_column], errors="coerce")
    times = _parse_times(df[timestamp_column])
    valid = values.notna() & times.notna()
    dropped = int((~valid).sum())
    if dropped:
        logger.warning(f"{path}: dropped {dropped} malformed rows of {len(df)}")
    if not valid.any():
        raise DataError(f"{path} has no well-formed rows")

    times = times[valid].to_numpy(dtype=np.int64)
    if (np.diff(times) <= 0).any():
        raise DataError(
            f"{path}: timestamps in {timestamp_column!r} are not strictly increasing"
        )
    kept = values[valid].to_numpy(dtype=np.float64)
    return Series(kept, times, value_column, dropped)


def write_csv(
    path,
    series: Series,
    extra: Optional[dict] = None,
    timestamp_column: str = "timestamp",
) -> None:
    """Write timestamp + value columns; values keep full precision."""
    index = pd.to_datetime(series.times, unit="s")
    frame = pd.DataFrame(
        {
            timestamp_column: index.strftime("%Y-%m-%dT%H:%M:%S"),
            series.name: series.values,
        }
    )
    for name, values in (extra or {}).items():
        frame[name] = np.asarray(values, dtype=np.float64)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(frame)} rows to {path}")


@dataclass
class WindowBatch:
    """
    Stacked windows ready for a vectorized forward pass. Images are kept as
    boolean masks and colorized on demand.
    """

    lookback: np.ndarray
    lookback_norm: np.ndarray
    time_features: np.ndarray
    horizon: np.ndarray
    horizon_times: np.ndarray
    vmin: np.ndarray
    scale: np.ndarray
    masks: np.ndarray
    render: RenderConfig
    sources: List[str] = field(default_factory=list)

    @classmethod
    def from_windows(
        cls,
        windows: Sequence[SeriesWindow],
        render: RenderConfig,
        cache: Optional[RenderCache] = None,
    ) -> "WindowBatch":
        if not windows:
            raise DataError("cannot batch an empty list of windows")
        cache = cache if cache is not None else RenderCache()
        lookback = np.stack([w.lookback for w in windows])
        times = np.stack([w.lookback_times for w in windows])
        vmin = np.array([w.vmin for w in windows])
        scale = np.array([w.scale for w in windows])
        n, length = lookback.shape
        features = decompose_timestamps(times.reshape(-1))
        features = features.reshape(n, length, len(TIME_FIELDS))
        return cls(
            lookback=lookback,
            lookback_norm=(lookback - vmin[:, None]) / scale[:, None],
            time_features=features,
            horizon=np.stack([w.horizon for w in windows]),
            horizon_times=np.stack([w.horizon_times for w in windows]),
            vmin=vmin,
            scale=scale,
            masks=np.stack([cache.mask(w.lookback, render) for w in windows]),
            render=render,
            sources=[w.source for w in windows],
        )

    def __len__(self):
        return self.lookback.shape[0]

    def images(self) -> np.ndarray:
        return colorize(self.masks, self.render)

    def take(self, index) -> "WindowBatch":
        index = np.asarray(index)
        return WindowBatch(
            lookback=self.lookback[index],
            lookback_norm=self.lookback_norm[index],
            time_features=self.time_features[index],
            horizon=self.horizon[index],
            horizon_times=self.horizon_times[index],
            vmin=self.vmin[index],
            scale=self.scale[index],
            masks=self.masks[index],
            render=self.render,
            sources=[self.sources[i] for i in index] if self.sources else [],
        )


@dataclass
class ForecastDataset:
    train: WindowBatch
    val: WindowBatch
    test: WindowBatch


def build_dataset(
    series_list: Sequence[Series],
    lookback: int,
    horizon: int,
    render: RenderConfig,
    ratios: Sequence[float] = (0.7, 0.1, 0.2),
    stride: int = 1,
    cache: Optional[RenderCache] = None,
) -> ForecastDataset:
    """Window and split every series on its own, then pool the partitions."""
    cache = cache if cache is not None else RenderCache()
    parts = ([], [], [])
    for series in series_list:
        windows = window_dataset(series, lookback, horizon, stride)
        for pool, part in zip(parts, split(windows, ratios)):
            pool.extend(part)
    logger.info(
        f"Built dataset from {len(series_list)} series: "
        f"{len(parts[0])} train / {len(parts[1])} val / {len(parts[2])} test windows"
    )
    train, val, test = (WindowBatch.from_windows(p, render, cache) for p in parts)
    return ForecastDataset(train, val, test)


@dataclass(frozen=True)
class DataConfig:
    """A CSV file at `path`, or `series` seeded synthetic series when `path` is None."""

    path: Optional[str] = None
    value_columns: Tuple[str, ...] = ("value",)
    timestamp_column: str = "timestamp"
    ratios: Tuple[float, float, float] = (0.7, 0.1, 0.2)
    stride: int = 1
    series: int = 1

    def __post_init__(self):
        columns = self.value_columns
        if isinstance(columns, str):
            columns = (columns,)
        object.__setattr__(self, "value_columns", tuple(columns))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.value_columns:
            raise ConfigError("DATA_VALUE_COLUMNS must name at least one column")
        ratios = self.ratios
        if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(
                "DATA_RATIOS must be three positive numbers summing to 1, got "
                f"{self.ratios}"
            )
        if self.stride < 1:
            raise ConfigError(f"DATA_STRIDE must be >= 1, got {self.stride}")
        if self.series < 1:
            raise ConfigError(f"DATA_SERIES must be >= 1, got {self.series}")


def synth_name(index: int) -> str:
    return "value" if index == 0 else f"value_{index}"


def load_sources(data: DataConfig, synth: SynthConfig) -> List[Series]:
    if data.path is not None:
        return [
            load_csv(data.path, column, data.timestamp_column)
            for column in data.value_columns
        ]
    return [
        synth_generate(replace(synth, seed=synth.seed + i), synth_name(i))
        for i in range(data.series)
    ]
