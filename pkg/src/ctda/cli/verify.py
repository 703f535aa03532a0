"""
Verification command: runs the property suite and writes verify.json.
"""
from typing import Dict

import click
from tabulate import tabulate

from ctda.cli.main import cli
from ctda.cli.utils import experiment_options, handle_exceptions, load_experiment
from ctda.errors import VerificationError
from ctda.harness.commands import cmd_verify, layout_for


def _echo_report(report: Dict) -> None:
    rows = [
        [c["name"], "pass" if c["passed"] else "FAIL", c["tolerance"], c["measured"], c["detail"]]
        for c in report["checks"]
    ]
    click.echo(tabulate(rows, headers=["check", "result", "tolerance", "measured", "detail"],
                        tablefmt="github", floatfmt=".3g"))


@cli.command('verify')
@experiment_options
@handle_exceptions
def verify_cmd(config_path, seed):
    """Check losses, gradients, estimators and the loss decomposition on random batches."""
    experiment = load_experiment(config_path, seed)

    try:
        report = cmd_verify(experiment)
    except VerificationError as e:
        if e.report:
            _echo_report(e.report)
        raise

    _echo_report(report)
    click.echo(f"\nAll checks passed; report written to {layout_for(experiment).verify_report}")
