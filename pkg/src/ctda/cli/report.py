"""
Report command: rebuild plots and console tables from existing CSVs.
"""
import click

from ctda.cli.main import cli
from ctda.cli.utils import experiment_options, handle_exceptions, load_experiment
from ctda.harness.commands import cmd_report, layout_for


@cli.command('report')
@experiment_options
@handle_exceptions
def report_cmd(config_path, seed):
    """Redraw SVG plots and print the strategy and correlation tables."""
    experiment = load_experiment(config_path, seed)
    for section in cmd_report(experiment):
        click.echo(section)
        click.echo("")
    click.echo(f"Plots written under {layout_for(experiment).reports}")
