from dataclasses import replace

import numpy as np
import pytest

from hrs.data import Series, WindowBatch, build_dataset, split, window_dataset
from hrs.errors import ConfigError, DataError, DivergenceError
from hrs.loss import SalParams
from hrs.model import HrsConfig, ModelParams
from hrs.render import RenderCache, RenderConfig
from hrs.tensor import Tensor
from hrs.training import (
    Adam,
    TrainConfig,
    evaluate,
    forecast_records,
    forecast_series,
    resolve_sal,
    sal_vs_mse,
    train,
    uo_sal,
)

RENDER = RenderConfig(height=4, expansion=1, line_width=1)


@pytest.fixture
def ramp_data(ramp_series):
    cfg = HrsConfig(
        lookback=4,
        horizon=2,
        kernel=(2, 2),
        stride=(2, 2),
        embed_dim=4,
        fusion_dim=4,
        render=RENDER,
    )
    train_w, val_w, test_w = split(window_dataset(ramp_series, 4, 2))
    batches = [WindowBatch.from_windows(w, RENDER) for w in (train_w, val_w, test_w)]
    return cfg, batches


@pytest.fixture
def tiny_data(tiny_cfg, synth_series):
    return build_dataset(
        [synth_series],
        tiny_cfg.lookback,
        tiny_cfg.horizon,
        tiny_cfg.render,
        cache=RenderCache(),
    )


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs,key",
        [
            ({"loss": "mae"}, "TRAIN_LOSS"),
            ({"learning_rate": 0.0}, "TRAIN_LEARNING_RATE"),
            ({"batch_size": 0}, "TRAIN_BATCH_SIZE"),
            ({"tau_scale": -1.0}, "TRAIN_TAU_SCALE"),
            ({"uo_gate_scale": 0.0}, "TRAIN_UO_GATE_SCALE"),
        ],
    )
    def test_invalid(self, kwargs, key):
        with pytest.raises(ConfigError, match=key):
            TrainConfig(**kwargs)


def test_adam_moves_towards_minimum():
    params = ModelParams(
        "linear",
        {"linear.w": Tensor.parameter([[3.0]]), "linear.b": Tensor.parameter([0.0])},
    )
    optimizer = Adam(params, lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    for _ in range(200):
        params.zero_grad()
        w = params["linear.w"]
        (w * w).sum().backward()
        optimizer.step()
    assert abs(params["linear.w"].data[0, 0]) < 0.1
    assert params["linear.b"].data[0] == 0.0


def test_resolve_sal_scales_tau_by_target_spread():
    targets = np.array([[0.0, 2.0], [4.0, 6.0]])
    sp = resolve_sal(TrainConfig(tau_scale=0.5), targets)
    assert sp.tau == pytest.approx(0.5 * np.std(targets))
    fixed = resolve_sal(TrainConfig(sal=SalParams(tau=3.0)), targets)
    assert fixed.tau == 3.0


def test_uo_sal_uses_the_sweep_gate():
    targets = np.array([[0.0, 2.0], [4.0, 6.0]])
    sp = uo_sal(TrainConfig(uo_gate_scale=5.0), 20.0, targets)
    assert sp.tau == pytest.approx(5.0 * np.std(targets))
    assert (sp.revenue + sp.penalty) / sp.cost == pytest.approx(20.0)


class TestTrain:
    def test_linear_baseline_fits_a_ramp(self, ramp_data):
        cfg, (train_b, val_b, _) = ramp_data
        train_cfg = TrainConfig(
            loss="mse", learning_rate=2e-2, max_epochs=200, patience=200
        )
        result = train("linear", cfg, train_cfg, train_b, val_b)
        best = min(r.val_loss for r in result.history)
        assert best < 1e-6
        assert best < result.history[0].val_loss
        report = evaluate(result.params, cfg, val_b, SalParams())
        assert report.mse == pytest.approx(best)

    def test_best_validation_loss_only_improves(self, tiny_cfg, tiny_data):
        train_cfg = TrainConfig(max_epochs=3)
        result = train("hrs", tiny_cfg, train_cfg, tiny_data.train, tiny_data.val)
        best = [r.val_loss for r in result.history if r.is_best]
        assert result.history[0].is_best
        assert best == sorted(best, reverse=True)

    def test_same_seed_same_history(self, tiny_cfg, tiny_data):
        train_cfg = TrainConfig(max_epochs=2, seed=11)
        a = train("hrs", tiny_cfg, train_cfg, tiny_data.train, tiny_data.val)
        b = train("hrs", tiny_cfg, train_cfg, tiny_data.train, tiny_data.val)
        assert [r.val_loss for r in a.history] == [r.val_loss for r in b.history]
        for name, array in a.params.arrays().items():
            assert array.tobytes() == b.params[name].data.tobytes()

    def test_early_stopping(self, ramp_data):
        cfg, (train_b, val_b, _) = ramp_data
        # steps this small round away, so validation loss never improves after epoch 1
        train_cfg = TrainConfig(
            loss="mse", learning_rate=1e-300, max_epochs=50, patience=2
        )
        result = train("linear", cfg, train_cfg, train_b, val_b)
        assert [r.is_best for r in result.history] == [True, False, False]

    def test_divergence(self, ramp_data):
        cfg, (train_b, val_b, _) = ramp_data
        train_cfg = TrainConfig(loss="mse", learning_rate=1e300, max_epochs=5)
        with pytest.raises(DivergenceError):
            train("linear", cfg, train_cfg, train_b, val_b)

    def test_oracle_skips_training(self, tiny_cfg, tiny_data):
        result = train(
            "oracle", tiny_cfg, TrainConfig(), tiny_data.train, tiny_data.val
        )
        assert result.history == []
        report = evaluate(result.params, tiny_cfg, tiny_data.test, SalParams())
        assert (report.apl, report.sla_violation_count) == (0.0, 0)

    def test_sal_vs_mse_trains_both(self, ramp_data):
        cfg, (train_b, val_b, _) = ramp_data
        results = sal_vs_mse("linear", cfg, TrainConfig(max_epochs=2), train_b, val_b)
        assert set(results) == {"sal", "mse"}
        assert results["sal"].sal.tau is not None


def test_forecast_records(tiny_cfg, tiny_data):
    oracle = ModelParams.init(tiny_cfg, np.random.default_rng(0), "oracle")
    records = forecast_records(oracle, tiny_cfg, tiny_data.test, name="oracle")
    assert len(records) == len(tiny_data.test) * tiny_cfg.horizon
    first = records[0]
    assert first["actual"] == first["forecast"]
    assert (first["name"], first["window"], first["step"]) == ("oracle", 0, 0)
    assert first["source"] == "value"


class TestForecastSeries:
    def test_oracle_reproduces_actuals_with_tail_padding(self, tiny_cfg, synth_series):
        oracle = ModelParams.init(tiny_cfg, np.random.default_rng(0), "oracle")
        start, stop = 21, len(synth_series)
        out = forecast_series(oracle, tiny_cfg, synth_series, start, stop)
        np.testing.assert_array_equal(out, synth_series.values[start:stop])

    def test_rejects_span_without_history(self, tiny_cfg, synth_series):
        oracle = ModelParams.init(tiny_cfg, np.random.default_rng(0), "oracle")
        with pytest.raises(DataError):
            forecast_series(oracle, tiny_cfg, synth_series, 4, 40)

    def test_lengths(self, tiny_cfg):
        steps = np.arange(60)
        series = Series(np.sin(steps / 3.0) + 2.0, 1_700_000_000 + 3600 * steps)
        params = ModelParams.init(tiny_cfg, np.random.default_rng(0))
        assert forecast_series(params, tiny_cfg, series, 16, 27).shape == (11,)


def test_train_rejects_empty_partitions(tiny_cfg, tiny_data):
    empty = replace(tiny_data.val)
    empty.lookback = empty.lookback[:0]
    with pytest.raises(DataError):
        train("linear", tiny_cfg, TrainConfig(), tiny_data.train, empty)
