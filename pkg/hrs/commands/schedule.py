import os

import click
import numpy as np

from hrs.errors import ConfigError
from hrs.scheduler import build_fleet, outcome_records, simulate
from hrs.training import forecast_series


def register_schedule_commands(cli):
    @cli.command("simulate")
    @click.option(
        "--checkpoint",
        "checkpoints",
        multiple=True,
        help="Forecaster checkpoint, repeatable.",
    )
    @click.pass_obj
    def simulate_command(session, checkpoints):
        """Schedule the SIM_* fleet from forecasts and decompose the profit loss."""
        cfg = session.cfg
        fleet = build_fleet(cfg.scenario)
        start, stop = fleet.warmup, fleet.warmup + fleet.intervals

        forecasters = [("perfect", fleet.actual_demand, fleet.actual_workloads)]
        for checkpoint in checkpoints:
            params, model_cfg, _ = session.load_checkpoint(checkpoint)
            if model_cfg.lookback > fleet.warmup:
                raise ConfigError(
                    f"SIM_WARMUP {fleet.warmup} is shorter than the lookback "
                    f"{model_cfg.lookback} of {checkpoint}"
                )
            predicted = [
                forecast_series(params, model_cfg, s, start, stop, session.cache)
                for s in [fleet.demand, *fleet.workloads]
            ]
            label = os.path.splitext(os.path.basename(checkpoint))[0]
            forecasters.append((label, predicted[0], np.stack(predicted[1:])))

        summaries = []
        for label, demand, workloads in forecasters:
            outcome = simulate(fleet, demand, workloads, cfg.sal)
            records = outcome_records(
                outcome, fleet.servers, fleet.times, forecaster=label
            )
            session.records.write(f"simulate_{label}.jsonl", records)
            summaries.append(outcome.summary(forecaster=label))
        session.records.write("simulate_summary.jsonl", summaries)
        session.finish("simulate", {"checkpoints": list(checkpoints)})
        for s in summaries:
            click.echo(
                f"{s['forecaster']:>12}  total {s['total_loss']:.4f}  "
                f"under {s['under_loss']:.4f}  over {s['over_loss']:.4f}  "
                f"SLA events {s['sla_events']}"
            )
