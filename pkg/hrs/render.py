"""
Representation transfer: rasterize a numeric lookback window into a
3-channel polyline image per variate.

Each variate is min-max normalized, flipped so larger values sit higher,
and drawn as a polyline with vertices at (j*ex, round(line[j]*(H-1))).
Segments use an integer midpoint rule (the minor coordinate is the ideal
line rounded half up), then a square brush of side `line_width` dilates
them. Pixels are therefore exactly the background or the line color.
"""
import hashlib
import logging
import threading
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from hrs.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

Color = Tuple[float, float, float]

COLOR_PRESETS: Dict[str, Color] = {
    "r": (1.0, 0.0, 0.0),
    "g": (0.0, 1.0, 0.0),
    "b": (0.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
}


def _as_color(value) -> Color:
    if isinstance(value, str):
        if value not in COLOR_PRESETS:
            raise ConfigError(f"unknown color preset {value!r}")
        return COLOR_PRESETS[value]
    color = tuple(float(c) for c in value)
    if len(color) != 3 or any(c < 0.0 or c > 1.0 for c in color):
        raise ConfigError(f"colors are RGB triples in [0, 1], got {value!r}")
    return color


@dataclass(frozen=True)
class RenderConfig:
    height: int = 32
    expansion: int = 2
    background: Color = (0.0, 0.0, 0.0)
    line_color: Color = (1.0, 1.0, 1.0)
    line_width: int = 2
    channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "background", _as_color(self.background))
        object.__setattr__(self, "line_color", _as_color(self.line_color))
        if self.height < 1 or self.expansion < 1 or self.height * self.expansion < 2:
            raise ConfigError(
                "RENDER_HEIGHT*RENDER_EXPANSION must be >= 2, "
                f"got {self.height}*{self.expansion}"
            )
        if self.line_width < 1:
            raise ConfigError(f"RENDER_LINE_WIDTH must be >= 1, got {self.line_width}")
        if self.background == self.line_color:
            raise ConfigError("RENDER_BACKGROUND and RENDER_LINE_COLOR must differ")
        if self.channels != 3:
            raise ConfigError(
                f"images carry 3 channels per variate, got {self.channels}"
            )

    @property
    def pixel_height(self) -> int:
        return self.height * self.expansion

    def pixel_width(self, length: int) -> int:
        return length * self.expansion


@dataclass(frozen=True)
class ImageTensor:
    """(3*M)×H×W image with values in [0, 1]."""

    data: np.ndarray

    @property
    def shape(self):
        return self.data.shape

    @property
    def variates(self) -> int:
        return self.data.shape[0] // 3


def vertex_rows(values: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    lo, hi = values.min(), values.max()
    diff = hi - lo
    if diff == 0:
        line = np.ones_like(values)
    else:
        line = 1.0 - (values - lo) / diff
    return np.round(line * (cfg.pixel_height - 1)).astype(np.int64)


def segment_pixels(x0: int, y0: int, x1: int, y1: int):
    """Pixels of the thin segment (x0, y0)-(x1, y1), endpoints included."""
    dx, dy = x1 - x0, y1 - y0
    steps = max(abs(dx), abs(dy))
    if steps == 0:
        return np.array([x0]), np.array([y0])
    i = np.arange(steps + 1)
    if abs(dx) >= abs(dy):
        xs = x0 + np.sign(dx) * i
        ys = y0 + np.floor_divide(2 * i * dy + steps, 2 * steps)
    else:
        ys = y0 + np.sign(dy) * i
        xs = x0 + np.floor_divide(2 * i * dx + steps, 2 * steps)
    return xs, ys


def render_mask(values: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    """Boolean H×W mask of line pixels for one variate."""
    length = values.shape[0]
    height, width = cfg.pixel_height, cfg.pixel_width(length)
    rows = vertex_rows(values, cfg)
    cols = np.arange(length) * cfg.expansion

    xs, ys = [], []
    for j in range(length - 1):
        seg_x, seg_y = segment_pixels(cols[j], rows[j], cols[j + 1], rows[j + 1])
        xs.append(seg_x)
        ys.append(seg_y)
    xs, ys = np.concatenate(xs), np.concatenate(ys)

    mask = np.zeros((height, width), dtype=bool)
    lo = -((cfg.line_width - 1) // 2)
    hi = cfg.line_width // 2
    for oy in range(lo, hi + 1):
        for ox in range(lo, hi + 1):
            px, py = xs + ox, ys + oy
            keep = (px >= 0) & (px < width) & (py >= 0) & (py < height)
            mask[py[keep], px[keep]] = True
    return mask


def colorize(mask: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    """Map a mask (…×H×W) to RGB (…×3×H×W)."""
    bg = np.asarray(cfg.background)[:, None, None]
    fg = np.asarray(cfg.line_color)[:, None, None]
    return bg + mask[..., None, :, :] * (fg - bg)


def _check_window(window) -> np.ndarray:
    values = np.asarray(window, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise DataError(f"window must be L or L×M, got shape {values.shape}")
    if values.shape[0] < 2:
        raise DataError(f"window length must be >= 2, got {values.shape[0]}")
    if np.isnan(values).any():
        raise DataError("window contains NaN")
    if np.isinf(values).any():
        raise DataError("window contains infinite values")
    return values


def render_series(window, cfg: RenderConfig) -> ImageTensor:
    values = _check_window(window)
    blocks = [
        colorize(render_mask(values[:, i], cfg), cfg) for i in range(values.shape[1])
    ]
    return ImageTensor(np.concatenate(blocks, axis=0))


class RenderCache:
    """Masks of univariate windows keyed by (window hash, RenderConfig)."""

    def __init__(self):
        self._masks: Dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def mask(self, values: np.ndarray, cfg: RenderConfig) -> np.ndarray:
        values = _check_window(values)[:, 0]
        key = (hashlib.sha1(values.tobytes()).hexdigest(), cfg)
        with self._lock:
            cached = self._masks.get(key)
            if cached is not None:
                self.hits += 1
                return cached
        mask = render_mask(values, cfg)
        with self._lock:
            self.misses += 1
            self._masks[key] = mask
        return mask

    def __len__(self):
        return len(self._masks)


def write_ppm(path, image: ImageTensor, variate: int = 0) -> None:
    """Dump one variate block of `image` as a binary P6 pixmap."""
    if not 0 <= variate < image.variates:
        raise DataError(f"variate {variate} out of range for {image.variates} variates")
    block = image.data[3 * variate : 3 * variate + 3]
    pixels = np.round(block.transpose(1, 2, 0) * 255).astype(np.uint8)
    height, width = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    logger.info(f"Wrote {width}x{height} pixmap to {path}")
