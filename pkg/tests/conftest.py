import numpy as np
import pytest

from hrs.data import Series, SynthConfig, synth_generate
from hrs.model import HrsConfig
from hrs.render import RenderConfig


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_cfg():
    """Small enough for full finite-difference checks: 8×16 images, V=8, L=16, T=4."""
    return HrsConfig(
        lookback=16,
        horizon=4,
        embed_dim=4,
        fusion_dim=8,
        kernel=(4, 4),
        stride=(4, 4),
        render=RenderConfig(height=8, expansion=1, line_width=1),
    )


@pytest.fixture
def synth_series():
    return synth_generate(SynthConfig(length=240, seed=3))


@pytest.fixture
def ramp_series():
    steps = np.arange(100)
    return Series(10.0 + 2.0 * steps, 1_700_000_000 + 3600 * steps, "ramp")


@pytest.fixture
def tiny_env(tmp_path):
    """Config file for CLI runs that finish in seconds."""
    path = tmp_path / "tiny.env"
    path.write_text(
        "\n".join(
            [
                "SYNTH_LENGTH=400",
                "MODEL_LOOKBACK=16",
                "MODEL_HORIZON=4",
                "MODEL_EMBED_DIM=4",
                "MODEL_FUSION_DIM=8",
                "MODEL_KERNEL=(4, 4)",
                "MODEL_STRIDE=(4, 4)",
                "RENDER_HEIGHT=8",
                "RENDER_EXPANSION=1",
                "TRAIN_MAX_EPOCHS=2",
                "TRAIN_BATCH_SIZE=64",
                "SIM_SERVERS=3",
                "SIM_INTERVALS=48",
                "SIM_WARMUP=24",
            ]
        )
        + "\n"
    )
    return path
