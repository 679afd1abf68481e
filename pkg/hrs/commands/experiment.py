import logging
import os
import time
from dataclasses import replace

import click
import numpy as np

from hrs.data import make_window, synth_generate
from hrs.metrics import coefficient_of_variation, evaluate_forecasts, offset_sweep
from hrs.model import MODEL_KINDS, ModelParams, forecast_batch, hrs_forward
from hrs.training import LOSS_KINDS, evaluate, forecast_records, train, uo_sal

logger = logging.getLogger(__name__)

ABLATIONS = ("full", "no_vfem", "no_nfem", "no_ffm", "no_mdm")
UO_RATIOS = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
HORIZONS = (24, 48, 72)
LINE_WIDTHS = (1, 2, 3)
COLOR_SETTINGS = (("r", "g"), ("g", "b"), ("b", "r"))
TRAINED_KINDS = ("hrs", "linear")


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _model_option(choices=TRAINED_KINDS):
    return click.option(
        "--model",
        "kind",
        type=click.Choice(choices),
        default="hrs",
        show_default=True,
    )


def register_experiment_commands(cli):
    @cli.command("train")
    @_model_option(MODEL_KINDS)
    @click.option(
        "--loss",
        type=click.Choice(LOSS_KINDS),
        default=None,
        help="Overrides TRAIN_LOSS.",
    )
    @click.option(
        "--name", default=None, help="Artifact name; defaults to <model>_<loss>."
    )
    @click.pass_obj
    def train_command(session, kind, loss, name):
        """Fit a model, then write its checkpoint, history, forecasts and metrics."""
        cfg = session.cfg
        train_cfg = replace(cfg.train, loss=loss) if loss else cfg.train
        name = name or f"{kind}_{train_cfg.loss}"
        dataset = session.dataset()

        result = train(kind, cfg.model, train_cfg, dataset.train, dataset.val)
        checkpoint = session.checkpoints.save(
            name, result.params, cfg.model, result.sal
        )
        session.records.track(checkpoint)
        history = result.history_records(name=name)
        session.records.write(f"{name}_history.jsonl", history)
        forecasts = forecast_records(result.params, cfg.model, dataset.test, name=name)
        session.records.write(f"{name}_forecasts.jsonl", forecasts)

        report = evaluate(result.params, cfg.model, dataset.test, cfg.sal)
        labels = {"name": name, "model": kind, "loss": train_cfg.loss, "split": "test"}
        session.records.write(f"{name}_metrics.jsonl", [report.to_record(**labels)])
        session.finish("train", {"kind": kind, "loss": loss, "name": name})
        click.echo(report.to_json_line(**labels))

    @cli.command("eval")
    @click.argument("checkpoint")
    @click.option(
        "--split",
        type=click.Choice(["train", "val", "test"]),
        default="test",
        show_default=True,
    )
    @click.pass_obj
    def eval_command(session, checkpoint, split):
        """Report APL, SLA violations and error fractions of a checkpoint."""
        params, model_cfg, _ = session.load_checkpoint(checkpoint)
        name = _stem(checkpoint)
        batch = getattr(session.dataset(model_cfg), split)
        report = evaluate(params, model_cfg, batch, session.cfg.sal)
        labels = {"name": name, "model": params.kind, "split": split}
        session.records.write(
            f"{name}_eval_{split}.jsonl", [report.to_record(**labels)]
        )
        forecasts = forecast_records(params, model_cfg, batch, name=name)
        session.records.write(f"{name}_eval_{split}_forecasts.jsonl", forecasts)
        session.finish("eval", {"checkpoint": checkpoint, "split": split})
        click.echo(report.to_json_line(**labels))

    @cli.command("ablate")
    @click.option(
        "--variant",
        "variants",
        multiple=True,
        type=click.Choice(ABLATIONS),
        default=ABLATIONS,
        show_default=True,
    )
    @click.pass_obj
    def ablate(session, variants):
        """Train HRS with one module off at a time; APL deltas against the full."""
        cfg = session.cfg
        variants = ("full",) + tuple(v for v in variants if v != "full")
        dataset = session.dataset()
        records = []
        for variant in variants:
            model_cfg = cfg.model.ablated(variant)
            result = train("hrs", model_cfg, cfg.train, dataset.train, dataset.val)
            report = evaluate(result.params, model_cfg, dataset.test, cfg.sal)
            records.append(report.to_record(variant=variant, loss=cfg.train.loss))
        full = records[0]["apl"]
        for record in records:
            record["apl_delta"] = record["apl"] - full
            record["apl_relative"] = record["apl"] / full - 1.0 if full > 0 else 0.0
        session.records.write("ablation.jsonl", records)
        session.finish("ablate", {"variants": list(variants)})
        for r in records:
            click.echo(
                f"{r['variant']:>8}  apl {r['apl']:.6g}  delta {r['apl_delta']:+.6g}"
            )

    @cli.command("sweep-uo")
    @click.option(
        "--ratio",
        "ratios",
        multiple=True,
        type=float,
        default=UO_RATIOS,
        show_default=True,
    )
    @_model_option()
    @click.pass_obj
    def sweep_uo(session, ratios, kind):
        """SAL at each U/O ratio (C = 1, R + P = ratio); under/over fractions."""
        cfg = session.cfg
        dataset = session.dataset()
        records = []
        for ratio in sorted(ratios):
            sp = uo_sal(cfg.train, ratio, dataset.train.horizon)
            train_cfg = replace(cfg.train, loss="sal", sal=sp)
            result = train(kind, cfg.model, train_cfg, dataset.train, dataset.val)
            report = evaluate(result.params, cfg.model, dataset.test, sp)
            records.append(report.to_record(uo_ratio=ratio, model=kind))
        session.records.write("uo_sweep.jsonl", records)
        session.finish("sweep-uo", {"ratios": list(ratios), "kind": kind})
        for r in records:
            click.echo(
                f"U/O {r['uo_ratio']:>6g}  under {r['under_fraction']:.3f}  "
                f"over {r['over_fraction']:.3f}"
            )

    @cli.command("sweep-horizon")
    @click.option(
        "--horizon",
        "horizons",
        multiple=True,
        type=int,
        default=HORIZONS,
        show_default=True,
    )
    @_model_option()
    @click.option(
        "--loss",
        "losses",
        multiple=True,
        type=click.Choice(LOSS_KINDS),
        default=LOSS_KINDS,
    )
    @click.pass_obj
    def sweep_horizon(session, horizons, kind, losses):
        """Train and evaluate per forecast horizon and objective."""
        cfg = session.cfg
        records = []
        for horizon in sorted(set(horizons)):
            model_cfg = replace(cfg.model, horizon=horizon)
            dataset = session.dataset(model_cfg)
            for loss in losses:
                train_cfg = replace(cfg.train, loss=loss)
                result = train(kind, model_cfg, train_cfg, dataset.train, dataset.val)
                report = evaluate(result.params, model_cfg, dataset.test, cfg.sal)
                records.append(report.to_record(horizon=horizon, loss=loss, model=kind))
        session.records.write("horizon_sweep.jsonl", records)
        session.finish(
            "sweep-horizon",
            {"horizons": list(horizons), "kind": kind, "losses": list(losses)},
        )
        for r in records:
            click.echo(
                f"T={r['horizon']:<4} {r['loss']:>3}  apl {r['apl']:.6g}  "
                f"SLA rate {r['sla_violation_rate']:.3f}"
            )

    @cli.command("offsets")
    @click.argument("checkpoint")
    @click.option(
        "--offset",
        "offsets",
        multiple=True,
        type=float,
        help="Constant shifts in series units.",
    )
    @click.option(
        "--steps",
        default=9,
        show_default=True,
        help="Grid size over +-1 test std without --offset.",
    )
    @click.pass_obj
    def offsets_command(session, checkpoint, offsets, steps):
        """APL of test forecasts shifted by constant offsets."""
        params, model_cfg, _ = session.load_checkpoint(checkpoint)
        name = _stem(checkpoint)
        test = session.dataset(model_cfg).test
        y_hat = forecast_batch(params, model_cfg, test)
        spread = float(np.std(test.horizon))
        grid = offsets or tuple(np.linspace(-1.0, 1.0, steps) * spread)
        records = []
        for offset, value in offset_sweep(test.horizon, y_hat, grid, session.cfg.sal):
            report = evaluate_forecasts(test.horizon, y_hat + offset, session.cfg.sal)
            records.append(
                {
                    "name": name,
                    "offset": offset,
                    "apl": value,
                    "sla_violation_rate": report.sla_violation_rate,
                }
            )
        session.records.write(f"{name}_offsets.jsonl", records)
        session.finish(
            "offsets",
            {"checkpoint": checkpoint, "offsets": list(offsets), "steps": steps},
        )
        best = min(records, key=lambda r: r["apl"])
        click.echo(f"lowest APL {best['apl']:.6g} at offset {best['offset']:+.6g}")

    @cli.command("sensitivity")
    @_model_option(("hrs",))
    @click.pass_obj
    def sensitivity(session, kind):
        """APL across line widths and colors, summarized by coefficient of variation."""
        cfg = session.cfg
        render = cfg.model.render
        settings = [
            ("line_width", f"lw={w}", replace(render, line_width=w))
            for w in LINE_WIDTHS
        ]
        settings += [
            ("color", f"lc={lc},bc={bc}", replace(render, line_color=lc, background=bc))
            for lc, bc in COLOR_SETTINGS
        ]
        records = []
        for factor, label, setting in settings:
            model_cfg = replace(cfg.model, render=setting)
            dataset = session.dataset(model_cfg)
            result = train(kind, model_cfg, cfg.train, dataset.train, dataset.val)
            report = evaluate(result.params, model_cfg, dataset.test, cfg.sal)
            records.append({"factor": factor, "setting": label, "apl": report.apl})
        for factor in ("line_width", "color"):
            values = [r["apl"] for r in records if r["factor"] == factor]
            cv = coefficient_of_variation(values)
            records.append({"factor": factor, "setting": "cv", "cv": cv})
        session.records.write("sensitivity.jsonl", records)
        session.finish("sensitivity", {"kind": kind})
        for r in records[-2:]:
            click.echo(f"{r['factor']}: CV {r['cv']:.4f}")

    @cli.command("timing")
    @click.option(
        "--lookback",
        "lookbacks",
        multiple=True,
        type=int,
        default=(256, 512),
        show_default=True,
    )
    @click.option("--repeats", default=100, show_default=True)
    @click.pass_obj
    def timing(session, lookbacks, repeats):
        """Median single-window inference time of HRS per lookback length."""
        cfg = session.cfg
        records = []
        for lookback in lookbacks:
            model_cfg = replace(cfg.model, lookback=lookback)
            params = ModelParams.init(model_cfg, np.random.default_rng(cfg.seed))
            length = lookback + model_cfg.horizon
            series = synth_generate(replace(cfg.synth, length=length))
            window = make_window(series, 0, lookback, model_cfg.horizon)
            hrs_forward(window, model_cfg, params)
            samples = []
            for _ in range(repeats):
                started = time.perf_counter()
                hrs_forward(window, model_cfg, params)
                samples.append(time.perf_counter() - started)
            median = float(np.median(samples))
            ms = median * 1e3
            logger.info(f"L={lookback}: median {ms:.3f} ms over {repeats} runs")
            records.append(
                {"lookback": lookback, "median_seconds": median, "repeats": repeats}
            )
        for prev, cur in zip(records, records[1:]):
            cur["ratio_to_previous"] = cur["median_seconds"] / prev["median_seconds"]
        session.records.write("timing.jsonl", records)
        session.finish("timing", {"lookbacks": list(lookbacks), "repeats": repeats})
        for r in records:
            click.echo(f"L={r['lookback']}: {r['median_seconds'] * 1e3:.3f} ms")
