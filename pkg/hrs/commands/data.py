import os
from dataclasses import replace

import click
import numpy as np

from hrs.data import load_sources, synth_generate, synth_name, write_csv
from hrs.errors import DataError
from hrs.render import render_series, write_ppm


def register_data_commands(cli):
    @cli.command("synth")
    @click.option(
        "--output",
        default="synth.csv",
        show_default=True,
        help="File name under the output directory.",
    )
    @click.pass_obj
    def synth(session, output):
        """Generate the seeded synthetic bursty-load series as CSV."""
        cfg = session.cfg
        series = [
            synth_generate(replace(cfg.synth, seed=cfg.synth.seed + i), synth_name(i))
            for i in range(cfg.data.series)
        ]
        os.makedirs(cfg.out_dir, exist_ok=True)
        path = session.records.path(output)
        extra = {s.name: s.values for s in series[1:]}
        write_csv(
            path, series[0], extra=extra, timestamp_column=cfg.data.timestamp_column
        )
        session.records.track(path)
        session.finish("synth", {"output": output})
        click.echo(path)

    @cli.command("render")
    @click.option(
        "--start",
        default=0,
        show_default=True,
        help="Index of the first lookback point.",
    )
    @click.option(
        "--count",
        default=1,
        show_default=True,
        help="Number of consecutive windows to dump.",
    )
    @click.pass_obj
    def render(session, start, count):
        """Dump rendered lookback windows as binary PPM files, one per variate."""
        cfg = session.cfg
        lookback = cfg.model.lookback
        sources = load_sources(cfg.data, cfg.synth)
        length = min(len(s) for s in sources)
        if start < 0 or start + count - 1 + lookback > length:
            end = start + count - 1 + lookback
            raise DataError(
                f"windows [{start}, {end}) do not fit a length-{length} series"
            )
        values = np.stack([s.values[:length] for s in sources], axis=-1)

        os.makedirs(cfg.out_dir, exist_ok=True)
        for offset in range(start, start + count):
            image = render_series(values[offset : offset + lookback], cfg.model.render)
            for variate in range(image.variates):
                name = sources[variate].name
                path = session.records.path(f"render_{offset}_{name}.ppm")
                write_ppm(path, image, variate)
                session.records.track(path)
                click.echo(path)
        session.finish("render", {"start": start, "count": count})
