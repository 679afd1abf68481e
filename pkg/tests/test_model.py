from dataclasses import replace

import numpy as np
import pytest

from hrs.data import (
    SynthConfig,
    WindowBatch,
    decompose_timestamps,
    make_window,
    synth_generate,
    window_dataset,
)
from hrs.errors import ConfigError, ShapeError
from hrs.loss import SalParams, sal_surrogate
from hrs.model import (
    HrsConfig,
    ModelParams,
    ffm,
    forecast_batch,
    forward_normalized,
    head,
    hrs_forward,
    mdm,
    nfem,
    nfem_features,
    parameter_shapes,
    predict_tensor,
    vfem,
)
from hrs.render import RenderConfig, colorize, render_series
from hrs.tensor import Tensor, gradcheck, layer_norm

START = 1_704_067_200


@pytest.fixture
def params(tiny_cfg):
    return ModelParams.init(tiny_cfg, np.random.default_rng(0))


@pytest.fixture
def batch(tiny_cfg, synth_series):
    windows = window_dataset(synth_series, tiny_cfg.lookback, tiny_cfg.horizon)[:6]
    return WindowBatch.from_windows(windows, tiny_cfg.render)


def zero(p: ModelParams, *names):
    for name in names:
        p[name].data[...] = 0.0


class TestHrsConfig:
    def test_derived_extents(self):
        cfg = HrsConfig(lookback=48)
        assert cfg.image_shape == (64, 96)
        assert cfg.patch_grid == (8, 12)
        assert cfg.patches == 96
        assert cfg.fused_tokens == 144
        assert cfg.mixed_tokens == 64

    def test_kernel_must_fit_image(self):
        with pytest.raises(ConfigError, match="MODEL_KERNEL"):
            HrsConfig(lookback=4, render=RenderConfig(height=4, expansion=1))

    def test_both_branches_off(self):
        with pytest.raises(ConfigError):
            HrsConfig(use_vfem=False, use_nfem=False)

    @pytest.mark.parametrize("name", ["lookback", "horizon", "embed_dim", "fusion_dim"])
    def test_positive_extents(self, name):
        with pytest.raises(ConfigError, match=f"MODEL_{name.upper()}"):
            HrsConfig(**{name: 0})

    def test_dict_round_trip(self, tiny_cfg):
        assert HrsConfig.from_dict(tiny_cfg.to_dict()) == tiny_cfg

    def test_unknown_ablation(self, tiny_cfg):
        with pytest.raises(ConfigError):
            tiny_cfg.ablated("no_head")


class TestModelParams:
    def test_deterministic_init(self, tiny_cfg):
        a = ModelParams.init(tiny_cfg, np.random.default_rng(1)).arrays()
        b = ModelParams.init(tiny_cfg, np.random.default_rng(1)).arrays()
        assert list(a) == list(b)
        for name in a:
            assert a[name].tobytes() == b[name].tobytes()

    def test_shapes_and_norm_init(self, tiny_cfg, params):
        for name, shape in parameter_shapes(tiny_cfg).items():
            assert params[name].shape == shape
        np.testing.assert_array_equal(params["mdm.ln1.gain"].data, np.ones(4))
        np.testing.assert_array_equal(params["mdm.ln2.shift"].data, np.zeros(4))
        bound = 1.0 / np.sqrt(tiny_cfg.mixed_tokens * 4)
        assert np.abs(params["head.w"].data).max() <= bound

    def test_load_arrays_checks_shapes(self, params):
        with pytest.raises(ShapeError):
            params.load_arrays({"head.b": np.zeros(7)})

    def test_non_finite_rejected(self):
        with pytest.raises(ShapeError):
            ModelParams("linear", {"linear.b": Tensor(np.array([np.nan]))})

    def test_baseline_kinds(self, tiny_cfg):
        assert set(parameter_shapes(tiny_cfg, "linear")) == {"linear.w", "linear.b"}
        oracle = ModelParams.init(tiny_cfg, np.random.default_rng(0), "oracle")
        assert oracle.n_parameters == 0


class TestVfem:
    def test_token_grid(self, rng):
        cfg = HrsConfig(lookback=48)
        p = ModelParams.init(cfg, rng)
        image = render_series(rng.normal(size=48), cfg.render)
        assert vfem(image, p, cfg).shape == (96, 16)

    def test_blank_image_gives_identical_tokens(self, tiny_cfg, params):
        zero(params, "vfem.b")
        blank = colorize(np.zeros(tiny_cfg.image_shape, dtype=bool), tiny_cfg.render)
        f_v = vfem(blank, params, tiny_cfg).data
        np.testing.assert_allclose(f_v, np.broadcast_to(f_v[0], f_v.shape), rtol=1e-12)

    def test_invariant_to_window_scale(self, tiny_cfg, params, rng):
        window = rng.normal(size=16)
        a = vfem(render_series(window, tiny_cfg.render), params, tiny_cfg).data
        b = vfem(render_series(2.0 * window, tiny_cfg.render), params, tiny_cfg).data
        np.testing.assert_array_equal(a, b)

    def test_wrong_image_shape(self, tiny_cfg, params):
        with pytest.raises(ShapeError):
            vfem(np.zeros((3, 8, 20)), params, tiny_cfg)


class TestNfem:
    def test_shape(self, rng):
        cfg = HrsConfig(lookback=96)
        p = ModelParams.init(cfg, rng)
        out = nfem(rng.normal(size=96), START + 3600 * np.arange(96), p, cfg)
        assert out.shape == (96, 16)

    def test_zero_input_and_time_weights_give_conv_bias(self, tiny_cfg, params):
        zero(params, "nfem.time.w", "nfem.time.b")
        out = nfem(np.zeros(16), START + 3600 * np.arange(16), params, tiny_cfg).data
        bias = np.broadcast_to(params["nfem.conv.b"].data, (16, 4))
        np.testing.assert_array_equal(out, bias)

    def test_timestamps_shift_by_calendar_embedding(self, tiny_cfg, params, rng):
        x = rng.normal(size=16)
        t1 = START + 3600 * np.arange(16)
        t2 = t1 + 86_400 * 40
        delta = nfem(x, t2, params, tiny_cfg).data - nfem(x, t1, params, tiny_cfg).data
        w = params["nfem.time.w"].data
        expected = (decompose_timestamps(t2) - decompose_timestamps(t1)) @ w.T
        np.testing.assert_allclose(delta, expected, atol=1e-12)

    def test_sensitive_to_raw_scale(self, tiny_cfg, params, rng):
        x = rng.normal(size=16)
        features = decompose_timestamps(START + 3600 * np.arange(16))
        a = nfem_features(x, features, params, tiny_cfg).data
        b = nfem_features(2.0 * x, features, params, tiny_cfg).data
        assert not np.allclose(a, b)

    def test_wrong_length(self, tiny_cfg, params):
        with pytest.raises(ShapeError):
            nfem(np.zeros(15), START + 3600 * np.arange(15), params, tiny_cfg)


class TestFfm:
    def test_projects_onto_fusion_tokens(self, tiny_cfg, params, rng):
        f_v, f_n = Tensor(rng.normal(size=(8, 4))), Tensor(rng.normal(size=(16, 4)))
        out = ffm(f_v, f_n, params, tiny_cfg)
        assert out.shape == (8, 4)

    def test_zero_weight_gives_bias_rows(self, tiny_cfg, params, rng):
        zero(params, "ffm.w")
        f_v, f_n = Tensor(rng.normal(size=(8, 4))), Tensor(rng.normal(size=(16, 4)))
        out = ffm(f_v, f_n, params, tiny_cfg).data
        bias = np.broadcast_to(params["ffm.b"].data[:, None], (8, 4))
        np.testing.assert_array_equal(out, bias)

    def test_linear_in_inputs(self, tiny_cfg, params, rng):
        f_v, f_n = rng.normal(size=(8, 4)), rng.normal(size=(16, 4))
        b = params["ffm.b"].data[:, None]
        base = ffm(Tensor(f_v), Tensor(f_n), params, tiny_cfg).data - b
        scaled = ffm(Tensor(3.0 * f_v), Tensor(3.0 * f_n), params, tiny_cfg).data - b
        np.testing.assert_allclose(scaled, 3.0 * base, atol=1e-12)

    def test_feature_dim_mismatch(self, tiny_cfg, params, rng):
        with pytest.raises(ShapeError):
            ffm(
                Tensor(rng.normal(size=(8, 4))),
                Tensor(rng.normal(size=(16, 3))),
                params,
                tiny_cfg,
            )


class TestMdm:
    def test_shape(self, tiny_cfg, params, rng):
        assert mdm(Tensor(rng.normal(size=(8, 4))), params, tiny_cfg).shape == (8, 4)

    def test_zero_token_mixing_reduces_to_normalized_residual(self, rng):
        cfg = HrsConfig(
            lookback=16,
            horizon=4,
            embed_dim=4,
            fusion_dim=8,
            kernel=(4, 4),
            stride=(4, 4),
            dim_hidden=4,
            render=RenderConfig(height=8, expansion=1),
        )
        p = ModelParams.init(cfg, rng)
        zero(p, "mdm.token.w1", "mdm.token.w2", "mdm.dim.b1", "mdm.dim.b2")
        p["mdm.dim.w1"].data[...] = np.eye(4)
        p["mdm.dim.w2"].data[...] = np.eye(4)
        p["mdm.ln2.shift"].data[...] = 10.0

        f_f = rng.normal(size=(8, 4))
        out = mdm(Tensor(f_f), p, cfg).data
        residual = f_f + p["mdm.token.b2"].data[:, None]
        gain, shift = Tensor(np.ones(4)), Tensor(np.full(4, 10.0))
        expected = layer_norm(Tensor(residual), gain, shift, cfg.eps).data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_wrong_token_count(self, tiny_cfg, params, rng):
        with pytest.raises(ShapeError):
            mdm(Tensor(rng.normal(size=(9, 4))), params, tiny_cfg)


class TestHead:
    def test_zero_weight_gives_bias(self, tiny_cfg, params, rng):
        zero(params, "head.w")
        out = head(Tensor(rng.normal(size=(8, 4))), params, tiny_cfg).data
        np.testing.assert_array_equal(out, params["head.b"].data)


class TestForward:
    def test_batched_shapes(self, tiny_cfg, params, batch):
        out = forward_normalized(
            batch.images(), batch.lookback_norm, batch.time_features, params, tiny_cfg
        )
        assert out.shape == (6, 4)
        assert predict_tensor(params, tiny_cfg, batch).shape == (6, 4)

    def test_single_window_matches_batch(self, tiny_cfg, params, synth_series):
        window = make_window(synth_series, 0, 16, 4)
        single = hrs_forward(window, tiny_cfg, params)
        one = WindowBatch.from_windows([window], tiny_cfg.render)
        batched = forecast_batch(params, tiny_cfg, one)
        assert single.shape == (4,)
        assert np.isfinite(single).all()
        np.testing.assert_allclose(single, batched[0], rtol=1e-12)

    def test_deterministic(self, tiny_cfg, params, synth_series):
        window = make_window(synth_series, 5, 16, 4)
        first = hrs_forward(window, tiny_cfg, params)
        assert first.tobytes() == hrs_forward(window, tiny_cfg, params).tobytes()

    def test_chunking_does_not_change_forecasts(self, tiny_cfg, params, batch):
        np.testing.assert_allclose(
            forecast_batch(params, tiny_cfg, batch, chunk=4),
            forecast_batch(params, tiny_cfg, batch),
            rtol=1e-12,
        )

    def test_lookback_mismatch(self, tiny_cfg, params, synth_series):
        with pytest.raises(ShapeError):
            hrs_forward(make_window(synth_series, 0, 12, 4), tiny_cfg, params)

    def test_oracle_returns_actuals(self, tiny_cfg, batch):
        oracle = ModelParams.init(tiny_cfg, np.random.default_rng(0), "oracle")
        out = forecast_batch(oracle, tiny_cfg, batch)
        np.testing.assert_array_equal(out, batch.horizon)

    def test_linear_baseline_shape(self, tiny_cfg, batch):
        linear = ModelParams.init(tiny_cfg, np.random.default_rng(0), "linear")
        assert forecast_batch(linear, tiny_cfg, batch).shape == (6, 4)

    def test_end_to_end_gradients(self, tiny_cfg, params, batch):
        sp = SalParams(revenue=1.0, cost=0.5, penalty=2.0, tau=5.0)
        small = batch.take([0, 3])
        def fn():
            return sal_surrogate(
                small.horizon, predict_tensor(params, tiny_cfg, small), sp
            )

        assert gradcheck(fn, list(params), step=1e-6)

    @pytest.mark.parametrize("variant", ["no_vfem", "no_nfem", "no_ffm", "no_mdm"])
    def test_ablations_forecast(self, tiny_cfg, batch, variant):
        cfg = tiny_cfg.ablated(variant)
        p = ModelParams.init(cfg, np.random.default_rng(0))
        assert predict_tensor(p, cfg, batch).shape == (6, 4)
        names = set(parameter_shapes(cfg))
        prefix = variant[len("no_") :] + "."
        assert not any(n.startswith(prefix) for n in names)

    def test_multiple_series_share_parameters(self, tiny_cfg, params):
        a = synth_generate(SynthConfig(length=40, seed=1))
        b = synth_generate(replace(SynthConfig(length=40, seed=2), base=500.0))
        windows = [make_window(a, 0, 16, 4), make_window(b, 0, 16, 4)]
        out = forecast_batch(
            params, tiny_cfg, WindowBatch.from_windows(windows, tiny_cfg.render)
        )
        second = hrs_forward(windows[1], tiny_cfg, params)
        np.testing.assert_allclose(out[1], second, rtol=1e-12)
