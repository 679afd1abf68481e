import os

import click
import numpy as np

from hrs.plots import plot_forecasts, plot_history, plot_loss_bars


def _svg_name(path) -> str:
    return os.path.splitext(os.path.basename(path))[0] + ".svg"


def register_figure_commands(cli):
    @cli.command("plot")
    @click.option(
        "--forecasts",
        "forecast_files",
        multiple=True,
        help="*_forecasts.jsonl written by train or eval.",
    )
    @click.option(
        "--summary",
        "summary_files",
        multiple=True,
        help="simulate_summary.jsonl written by simulate.",
    )
    @click.option(
        "--history",
        "history_files",
        multiple=True,
        help="*_history.jsonl written by train.",
    )
    @click.option("--max-points", default=336, show_default=True)
    @click.pass_obj
    def plot(session, forecast_files, summary_files, history_files, max_points):
        """Write SVG line charts of forecasts and loss decomposition bars."""
        if not (forecast_files or summary_files or history_files):
            raise click.UsageError(
                "give at least one of --forecasts, --summary or --history"
            )
        os.makedirs(session.cfg.out_dir, exist_ok=True)
        written = []
        for path in forecast_files:
            records = session.read_records(path)
            source = records[0]["source"] if records else ""
            # one-step-ahead forecasts of consecutive windows form one continuous line
            first = [
                r for r in records if r["step"] == 0 and r["source"] == source
            ][:max_points]
            written.append(
                plot_forecasts(
                    [r["actual"] for r in first],
                    [r["forecast"] for r in first],
                    session.records.path(_svg_name(path)),
                    title=records[0].get("name", "") if records else "",
                )
            )
        for path in summary_files:
            records = session.read_records(path)
            written.append(
                plot_loss_bars(
                    [r["forecaster"] for r in records],
                    [r["under_loss"] for r in records],
                    [r["over_loss"] for r in records],
                    session.records.path(_svg_name(path)),
                )
            )
        for path in history_files:
            records = session.read_records(path)
            written.append(
                plot_history(
                    np.array([r["epoch"] for r in records]),
                    [r["train_loss"] for r in records],
                    [r["val_loss"] for r in records],
                    session.records.path(_svg_name(path)),
                )
            )
        for path in written:
            session.records.track(path)
            click.echo(path)
        session.finish(
            "plot",
            {
                "forecast_files": list(forecast_files),
                "summary_files": list(summary_files),
                "history_files": list(history_files),
                "max_points": max_points,
            },
        )
