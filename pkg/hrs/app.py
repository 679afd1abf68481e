import click

from hrs.commands import (
    register_data_commands,
    register_experiment_commands,
    register_figure_commands,
    register_schedule_commands,
)
from hrs.errors import HrsError
from hrs.session import Session, pin_inputs
from hrs.storage import read_manifest


class HrsGroup(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except HrsError as e:
            raise click.ClickException(str(e)) from e


@click.group(cls=HrsGroup)
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="Sectioned KEY=value file.",
)
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Seed for data, initialization, shuffling and the fleet.",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Output directory (OUT_DIR).",
)
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
@click.version_option(package_name="HRS")
@click.pass_context
def cli(ctx, config_path, seed, out_dir, verbose):
    """Hybrid-representation forecasting with scheduling-aware loss."""
    ctx.obj = Session.open(config_path, seed, out_dir, verbose)


register_data_commands(cli)
register_experiment_commands(cli)
register_schedule_commands(cli)
register_figure_commands(cli)


@cli.command("rerun")
@click.argument("manifest", type=click.Path(exists=True))
@click.pass_context
def rerun(ctx, manifest):
    """Repeat the command recorded in a manifest with its configuration and inputs."""
    recorded = read_manifest(manifest)
    command = cli.get_command(ctx, recorded["command"])
    if command is None or command is rerun:
        name = recorded["command"]
        raise click.ClickException(f"manifest names unknown command {name!r}")
    ctx.obj.replay(recorded["config"])
    params = pin_inputs(recorded["params"], recorded.get("inputs", {}))
    ctx.invoke(command, **params)


if __name__ == "__main__":
    cli()
