"""
Training command: one run directory per strategy plus the strategy comparison table.
"""
import click

from ctda.cli.main import cli
from ctda.cli.utils import experiment_options, handle_exceptions, load_experiment
from ctda.harness.commands import cmd_train, collect_strategies, layout_for
from ctda.harness.reports import format_table
from ctda.trainer.loop import Strategy

ALL = 'all'


@cli.command('train')
@experiment_options
@click.option('--strategy', '-s', 'strategies', multiple=True,
              type=click.Choice([s.value for s in Strategy] + [ALL]),
              help='Strategy to train; repeat for several, or "all" (default: the configured one)')
@handle_exceptions
def train_cmd(config_path, seed, strategies):
    """Train classifiers on the generated dataset."""
    experiment = load_experiment(config_path, seed)

    if ALL in strategies:
        selected = list(Strategy)
    else:
        selected = [Strategy(s) for s in dict.fromkeys(strategies)] or None

    run_dirs = cmd_train(experiment, selected)
    for strategy, run_dir in run_dirs.items():
        click.echo(f"{strategy}: {run_dir}")

    table = collect_strategies(layout_for(experiment))
    if table is not None:
        click.echo("")
        click.echo(format_table(table))
