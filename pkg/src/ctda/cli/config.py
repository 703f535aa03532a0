"""
Configuration command: show the environment settings and the resolved experiment.
"""
import json

import click

from ctda.cli.main import cli
from ctda.cli.utils import experiment_options, handle_exceptions, load_experiment
from ctda.config import Config


@cli.command('config')
@experiment_options
@click.pass_context
@handle_exceptions
def config_cmd(ctx, config_path, seed):
    """Display the environment configuration and the experiment that commands would run."""
    env = Config.load(ctx.obj.get('config_dir'))

    click.echo("Loaded Configuration Files:")
    for file_path in env.get('__loaded_files__', []):
        click.echo(f"  {file_path}")

    click.echo("\nEnvironment:")
    for key, value in env.items():
        if not key.startswith('_'):
            click.echo(f"  {key}={value}")

    experiment = load_experiment(config_path, seed)
    click.echo(f"\nOutput root: {experiment.output_root()}")
    click.echo("\nExperiment:")
    click.echo(json.dumps(experiment.to_dict(), indent=2, sort_keys=True))
