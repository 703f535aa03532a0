"""
Dataset generation command.
"""
import click

from ctda.cli.main import cli
from ctda.cli.utils import experiment_options, handle_exceptions, load_experiment
from ctda.harness.commands import cmd_generate
from ctda.synthgen import DatasetMode


@cli.command('generate')
@experiment_options
@click.option('--mode', type=click.Choice([m.value for m in DatasetMode]), default=None,
              help='Mixed (one domain per patch) or augmented (both domains)')
@click.option('--jobs', '-j', type=click.IntRange(min=1), default=1, help='Worker processes')
@handle_exceptions
def generate_cmd(config_path, seed, mode, jobs):
    """Generate the synthetic patch dataset."""
    experiment = load_experiment(config_path, seed).with_mode(mode)
    out_dir = cmd_generate(experiment, jobs=jobs)
    click.echo(f"Dataset written to {out_dir}")
