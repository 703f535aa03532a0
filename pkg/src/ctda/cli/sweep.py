"""
Temperature sweep command.
"""
import click

from ctda.cli.main import cli
from ctda.cli.utils import experiment_options, handle_exceptions, load_experiment
from ctda.harness.commands import cmd_sweep_tau
from ctda.harness.reports import format_table, read_correlation_table


@cli.command('sweep-tau')
@experiment_options
@click.option('--jobs', '-j', type=click.IntRange(min=1), default=1, help='Parallel training runs')
@handle_exceptions
def sweep_tau_cmd(config_path, seed, jobs):
    """Train once per temperature and correlate term changes with loss changes."""
    experiment = load_experiment(config_path, seed)
    path = cmd_sweep_tau(experiment, jobs=jobs)

    frame = read_correlation_table(path)
    pivot = frame.pivot(index="tau", columns="term", values="rho").reset_index()
    click.echo(format_table(pivot))
    click.echo(f"\nCorrelations written to {path}")
