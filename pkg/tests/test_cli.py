import json

import pytest
from click.testing import CliRunner

from hrs.app import cli
from hrs.config import load_experiment
from hrs.storage import read_manifest


@pytest.fixture
def run(tiny_env, tmp_path):
    runner = CliRunner()

    def invoke(*args, out="out", env=None, exit_code=0):
        options = ["--config", str(tiny_env), "--out", str(tmp_path / out)]
        result = runner.invoke(cli, [*options, *args], env=env)
        assert result.exit_code == exit_code, result.output
        return result

    return invoke


def read_records(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_synth_writes_csv_and_manifest(run, tmp_path):
    run("synth")
    out = tmp_path / "out"
    assert (out / "synth.csv").read_text().startswith("timestamp,value\n")
    manifest = read_manifest(out)
    assert manifest["command"] == "synth"
    assert list(manifest["artifacts"]) == ["config.env", "synth.csv"]
    assert manifest["config"]["MODEL_LOOKBACK"] == 16
    saved = load_experiment(out / "config.env", environ={})
    assert saved.model.lookback == 16
    assert saved.out_dir == str(out)


def test_render_dumps_ppm(run, tmp_path):
    run("render", "--start", "0", "--count", "2")
    for offset in (0, 1):
        image = (tmp_path / "out" / f"render_{offset}_value.ppm").read_bytes()
        assert image.startswith(b"P6\n16 8\n255\n")


def test_render_rejects_windows_past_the_end(run):
    result = run("render", "--start", "390", exit_code=1)
    assert "do not fit" in result.output


class TestOracleCheckpoint:
    @pytest.fixture
    def out(self, run, tmp_path):
        run("train", "--model", "oracle")
        return tmp_path / "out"

    def test_train_writes_artifacts(self, out):
        for suffix in (".ckpt", "_history.jsonl", "_forecasts.jsonl"):
            assert (out / f"oracle_sal{suffix}").is_file()
        assert read_records(out / "oracle_sal_metrics.jsonl")[0]["apl"] == 0.0

    def test_eval_reports_zero_loss(self, run, out):
        run("eval", "oracle_sal", "--split", "val")
        record = read_records(out / "oracle_sal_eval_val.jsonl")[0]
        assert record["apl"] == 0.0
        assert record["sla_violation_count"] == 0
        assert record["split"] == "val"

    def test_offsets_best_at_zero(self, run, out):
        result = run("offsets", "oracle_sal", "--steps", "3")
        records = read_records(out / "oracle_sal_offsets.jsonl")
        assert len(records) == 3
        assert min(records, key=lambda r: r["apl"])["offset"] == 0.0
        assert "offset +0" in result.output

    def test_simulate_matches_perfect_forecasts(self, run, out):
        run("simulate", "--checkpoint", "oracle_sal")
        records = read_records(out / "simulate_summary.jsonl")
        summary = {s["forecaster"]: s for s in records}
        assert set(summary) == {"perfect", "oracle_sal"}
        assert summary["perfect"]["total_loss"] == 0.0
        assert summary["oracle_sal"]["total_loss"] == 0.0
        assert summary["oracle_sal"]["intervals"] == 48
        assert len(read_records(out / "simulate_oracle_sal.jsonl")) == 48

    def test_plot_forecasts(self, run, out):
        run("plot", "--forecasts", "oracle_sal_forecasts.jsonl")
        svg = (out / "oracle_sal_forecasts.svg").read_text()
        assert svg.lstrip().startswith("<?xml")


def test_simulate_without_checkpoints(run, tmp_path):
    result = run("simulate")
    assert "perfect" in result.output
    assert len(read_records(tmp_path / "out" / "simulate_summary.jsonl")) == 1


def test_eval_reproduces_train_metrics_and_full_ablation(run, tmp_path):
    out = tmp_path / "out"
    run("train")
    trained = read_records(out / "hrs_sal_metrics.jsonl")[0]
    run("eval", "hrs_sal")
    assert read_records(out / "hrs_sal_eval_test.jsonl")[0]["apl"] == trained["apl"]
    run("ablate", "--variant", "full")
    (full,) = read_records(out / "ablation.jsonl")
    assert full["apl"] == trained["apl"]
    assert full["apl_delta"] == 0.0


def test_ablation_reports_deltas(run, tmp_path):
    run("ablate", "--variant", "no_ffm", "--variant", "no_mdm")
    records = read_records(tmp_path / "out" / "ablation.jsonl")
    assert [r["variant"] for r in records] == ["full", "no_ffm", "no_mdm"]
    for record in records[1:]:
        assert record["apl_delta"] == pytest.approx(record["apl"] - records[0]["apl"])


def test_uo_sweep_shifts_errors_to_over_forecasts(run, tmp_path):
    env = {"HRS_TRAIN_MAX_EPOCHS": "30", "HRS_TRAIN_LEARNING_RATE": "0.05"}
    run("sweep-uo", "--model", "linear", "--ratio", "20", "--ratio", "1", env=env)
    low, high = read_records(tmp_path / "out" / "uo_sweep.jsonl")
    assert (low["uo_ratio"], high["uo_ratio"]) == (1.0, 20.0)
    assert high["under_fraction"] <= low["under_fraction"]
    assert low["under_fraction"] > low["over_fraction"]


def test_horizon_sweep_covers_every_horizon_and_objective(run, tmp_path):
    run("sweep-horizon", "--model", "linear", "--horizon", "4", "--horizon", "2")
    records = read_records(tmp_path / "out" / "horizon_sweep.jsonl")
    pairs = [(r["horizon"], r["loss"]) for r in records]
    assert pairs == [(2, "sal"), (2, "mse"), (4, "sal"), (4, "mse")]
    assert all(r["n_points"] % r["horizon"] == 0 for r in records)
    assert read_manifest(tmp_path / "out")["params"]["horizons"] == [4, 2]


def test_sensitivity_reports_cv_per_factor(run, tmp_path):
    run("sensitivity")
    records = read_records(tmp_path / "out" / "sensitivity.jsonl")
    assert len(records) == 8
    factors = [r["factor"] for r in records if r["setting"] == "cv"]
    assert factors == ["line_width", "color"]
    assert all(r["cv"] >= 0.0 for r in records if r["setting"] == "cv")


def test_timing(run, tmp_path):
    run("timing", "--lookback", "16", "--lookback", "32", "--repeats", "2")
    first, second = read_records(tmp_path / "out" / "timing.jsonl")
    assert (first["lookback"], second["lookback"]) == (16, 32)
    assert second["ratio_to_previous"] > 0


def test_rerun_reproduces_metrics(run, tmp_path):
    run("train", "--model", "linear", out="first")
    first = tmp_path / "first"
    run("rerun", str(first / "manifest.json"), out="second")
    second = tmp_path / "second"
    for name in ("linear_sal_metrics.jsonl", "linear_sal.ckpt"):
        assert (second / name).read_bytes() == (first / name).read_bytes()
    assert read_manifest(second)["config_hash"] == read_manifest(first)["config_hash"]


class TestRerunWithInputs:
    @pytest.fixture
    def first(self, run, tmp_path):
        run("train", "--model", "linear", out="first")
        return tmp_path / "first"

    def test_eval_reads_the_recorded_checkpoint(self, run, tmp_path, first):
        run("eval", "linear_sal", out="first")
        inputs = read_manifest(first)["inputs"]
        assert inputs["linear_sal"]["path"] == str(first / "linear_sal.ckpt")
        run("rerun", str(first / "manifest.json"), out="second")
        name = "linear_sal_eval_test.jsonl"
        assert (tmp_path / "second" / name).read_bytes() == (first / name).read_bytes()

    def test_simulate_into_another_directory(self, run, tmp_path, first):
        run("simulate", "--checkpoint", "linear_sal", out="first")
        run("rerun", str(first / "manifest.json"), out="second")
        name = "simulate_summary.jsonl"
        assert (tmp_path / "second" / name).read_bytes() == (first / name).read_bytes()

    def test_changed_input_is_rejected(self, run, first):
        run("eval", "linear_sal", out="first")
        with open(first / "linear_sal.ckpt", "ab") as f:
            f.write(b"\0")
        manifest = str(first / "manifest.json")
        result = run("rerun", manifest, out="second", exit_code=1)
        assert "changed" in result.output


def test_seed_option_is_recorded(run, tmp_path):
    run("--seed", "9", "synth", out="seeded")
    assert read_manifest(tmp_path / "seeded")["seed"] == 9


def test_invalid_config_names_the_key(run):
    result = run("synth", env={"HRS_MODEL_LOOKBACK": "0"}, exit_code=1)
    assert "MODEL_LOOKBACK" in result.output


def test_usage_errors_exit_with_code_2(run):
    run("forecast", exit_code=2)
    run("train", "--bogus", exit_code=2)
