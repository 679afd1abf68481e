"""Static SVG figures of forecasts, loss decompositions and training curves."""
import logging
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp, so reruns give identical files
plt.rcParams["svg.hashsalt"] = "hrs"
_SVG_METADATA = {"Date": None}


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.info(f"Wrote figure {path}")
    return str(path)


def plot_forecasts(
    actual: Sequence[float], forecast: Sequence[float], path, title: str = ""
) -> str:
    actual = np.asarray(actual, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    steps = np.arange(actual.shape[0])
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.plot(steps, actual, color="black", linewidth=1.2, label="actual")
    ax.plot(steps, forecast, color="tab:red", linewidth=1.0, label="forecast")
    under = forecast < actual
    ax.scatter(
        steps[under],
        forecast[under],
        s=6,
        color="tab:orange",
        label="underprediction",
        zorder=3,
    )
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_loss_bars(
    labels: Sequence[str],
    under: Sequence[float],
    over: Sequence[float],
    path,
    title: str = "",
) -> str:
    """Stacked bars: solid for underprediction loss, hatched for overprediction loss."""
    x = np.arange(len(labels))
    under = np.asarray(under, dtype=np.float64)
    over = np.asarray(over, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(max(4, 1.5 * len(labels)), 4))
    ax.bar(x, under, color="tab:blue", label="underprediction")
    ax.bar(
        x,
        over,
        bottom=under,
        color="white",
        edgecolor="tab:blue",
        hatch="//",
        label="overprediction",
    )
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("profit loss")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_history(
    epochs: Sequence[int],
    train_loss: Sequence[float],
    val_loss: Sequence[float],
    path,
) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, train_loss, label="train")
    ax.plot(epochs, val_loss, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, path)
